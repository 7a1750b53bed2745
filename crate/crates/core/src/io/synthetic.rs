//! Analytic test scenes: a textured axis-aligned room with colored spheres,
//! ray-cast exactly for ground-truth color, depth and correspondences.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::geometry::{project, Intrinsics, PixelField, Pose, MIN_DEPTH};
use crate::image::{DepthMap, Grid, RgbImage};

/// Relative depth tolerance of the occlusion test.
pub const OCCLUSION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub spheres: usize,
    /// Checker cell size in meters.
    pub cell: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            room_min: [-3.0, -1.5, -3.0],
            room_max: [3.0, 1.5, 3.0],
            spheres: 20,
            cell: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    /// Wall index `2·axis + (0: min side, 1: max side)`.
    Wall(usize),
    Sphere(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals camera z-depth for rays with unit z in camera frame.
    pub t: f64,
    pub point: Vector3<f64>,
    surface: Surface,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    spec: SceneSpec,
    min: Vector3<f64>,
    max: Vector3<f64>,
    wall_colors: [[f64; 3]; 6],
    spheres: Vec<Sphere>,
}

fn hash3(seed: u64, a: i64, b: i64, c: i64) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [a, b, c] {
        h ^= v as u64;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
    }
    h
}

fn unit(h: u64, k: u32) -> f64 {
    ((h.rotate_left(k * 21) >> 11) as f64) / (1u64 << 53) as f64
}

impl SyntheticScene {
    pub fn new(spec: SceneSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let min = Vector3::from(spec.room_min);
        let max = Vector3::from(spec.room_max);
        let mut wall_colors = [[0.0; 3]; 6];
        for c in &mut wall_colors {
            *c = [
                rng.gen_range(0.3..0.9),
                rng.gen_range(0.3..0.9),
                rng.gen_range(0.3..0.9),
            ];
        }
        let span = max - min;
        let mut spheres = Vec::with_capacity(spec.spheres);
        while spheres.len() < spec.spheres {
            let radius = rng.gen_range(0.12..0.35);
            // Spheres live in a shell between the walls and a clear core
            // around the room center where cameras move.
            let center = Vector3::new(
                rng.gen_range(min.x + radius..max.x - radius),
                rng.gen_range(min.y + radius..max.y - radius),
                rng.gen_range(min.z + radius..max.z - radius),
            );
            let rel = (center - (min + max) * 0.5).component_div(&span);
            if rel.x.abs().max(rel.z.abs()) < 0.28 {
                continue;
            }
            let overlaps = spheres
                .iter()
                .any(|s: &Sphere| (s.center - center).norm() < s.radius + radius + 0.05);
            if overlaps {
                continue;
            }
            spheres.push(Sphere {
                center,
                radius,
                color: [
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(0.1..1.0),
                ],
            });
        }
        Self {
            spec,
            min,
            max,
            wall_colors,
            spheres,
        }
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.min, self.max)
    }

    /// Builds a scene with explicit spheres (seeded textures still apply).
    pub fn with_spheres(spec: SceneSpec, spheres: Vec<Sphere>) -> Self {
        let mut s = Self::new(SceneSpec { spheres: 0, ..spec });
        s.spec.spheres = spheres.len();
        s.spheres = spheres;
        s
    }

    /// Nearest intersection along `origin + t·dir`, `t > 0`. The origin must be
    /// inside the room.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<(f64, Surface)> = None;
        for a in 0..3 {
            let (t, side) = if dir[a] > 0.0 {
                ((self.max[a] - origin[a]) / dir[a], 1)
            } else if dir[a] < 0.0 {
                ((self.min[a] - origin[a]) / dir[a], 0)
            } else {
                continue;
            };
            if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, Surface::Wall(2 * a + side)));
            }
        }
        let dd = dir.norm_squared();
        for (i, s) in self.spheres.iter().enumerate() {
            let oc = origin - s.center;
            let b = oc.dot(dir);
            let c = oc.norm_squared() - s.radius * s.radius;
            let disc = b * b - dd * c;
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            let mut t = (-b - sq) / dd;
            if t <= 1e-12 {
                t = (-b + sq) / dd;
            }
            if t > 1e-12 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, Surface::Sphere(i)));
            }
        }
        best.map(|(t, surface)| Hit {
            t,
            point: origin + dir * t,
            surface,
        })
    }

    /// Procedural albedo: checker cells with per-cell color noise and a
    /// smooth shading ripple.
    pub fn color_at(&self, hit: &Hit) -> [f64; 3] {
        let seed = self.spec.seed;
        let cell = self.spec.cell;
        let (base, u, v, tag) = match hit.surface {
            Surface::Wall(w) => {
                let axis = w / 2;
                let (a, b) = match axis {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                (self.wall_colors[w], hit.point[a], hit.point[b], w as i64)
            }
            Surface::Sphere(i) => {
                let s = &self.spheres[i];
                let d = (hit.point - s.center) / s.radius;
                let lon = d.z.atan2(d.x);
                let lat = d.y.clamp(-1.0, 1.0).asin();
                (s.color, lon * s.radius * 1.2, lat * s.radius * 1.2, 100 + i as i64)
            }
        };
        let (ci, cj) = ((u / cell).floor() as i64, (v / cell).floor() as i64);
        let h = hash3(seed, tag, ci, cj);
        let dark = if (ci + cj).rem_euclid(2) == 0 { 1.0 } else { 0.55 };
        let ripple = 0.08 * ((u * 7.3).sin() * (v * 5.9).cos());
        let mut out = [0.0; 3];
        for c in 0..3 {
            let noise = unit(h, c as u32 + 1) - 0.5;
            out[c] = (base[c] * dark + 0.35 * noise + ripple).clamp(0.02, 0.98);
        }
        out
    }

    /// Casts the ray through pixel `p` of a camera at `pose`; `t` of the hit
    /// is the camera z-depth.
    pub fn cast_pixel(&self, pose: &Pose, k: &Intrinsics, p: &Vector2<f64>) -> Option<Hit> {
        let dir_cam = Vector3::new((p.x - k.cx) / k.fx, (p.y - k.cy) / k.fy, 1.0);
        let dir = pose.rotation() * dir_cam;
        self.intersect(pose.translation(), &dir)
    }
}

/// Ray-cast color and exact z-depth.
pub fn render_synthetic(scene: &SyntheticScene, pose: &Pose, k: &Intrinsics) -> (RgbImage, DepthMap) {
    render_synthetic_with(scene, pose, k, Exec::default())
}

pub fn render_synthetic_with(
    scene: &SyntheticScene,
    pose: &Pose,
    k: &Intrinsics,
    exec: Exec,
) -> (RgbImage, DepthMap) {
    let rows = exec.map(k.height, |y| {
        (0..k.width)
            .map(|x| {
                match scene.cast_pixel(pose, k, &Vector2::new(x as f64, y as f64)) {
                    Some(hit) => (scene.color_at(&hit), hit.t),
                    None => ([0.0; 3], f64::NAN),
                }
            })
            .collect::<Vec<_>>()
    });
    let flat: Vec<([f64; 3], f64)> = rows.into_iter().flatten().collect();
    let rgb = Grid::from_vec(k.width, k.height, flat.iter().map(|p| p.0).collect());
    let depth = DepthMap::from_values(k.width, k.height, flat.iter().map(|p| p.1).collect());
    (rgb, depth)
}

/// Exact correspondences from view `i` into view `j` with co-visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct GtFlow {
    pub field: PixelField,
    /// In bounds and not occluded in view `j`.
    pub visible: Vec<bool>,
}

pub fn gt_flow(scene: &SyntheticScene, pose_i: &Pose, pose_j: &Pose, k: &Intrinsics) -> GtFlow {
    gt_flow_with(scene, pose_i, pose_j, k, Exec::default())
}

pub fn gt_flow_with(
    scene: &SyntheticScene,
    pose_i: &Pose,
    pose_j: &Pose,
    k: &Intrinsics,
    exec: Exec,
) -> GtFlow {
    let rows = exec.map(k.height, |y| {
        (0..k.width)
            .map(|x| {
                let hit = scene.cast_pixel(pose_i, k, &Vector2::new(x as f64, y as f64))?;
                let xj = pose_j.inverse_transform_point(&hit.point);
                if xj.z <= MIN_DEPTH {
                    return None;
                }
                let q = project(&xj, k).ok()?;
                let in_bounds = k.contains(&q);
                let visible = in_bounds
                    && scene
                        .cast_pixel(pose_j, k, &q)
                        .is_some_and(|h| (h.t - xj.z).abs() <= OCCLUSION_TOLERANCE * xj.z);
                Some((q, in_bounds, visible))
            })
            .collect::<Vec<_>>()
    });
    let mut field = PixelField::empty(k.width, k.height);
    let mut visible = vec![false; k.width * k.height];
    for (i, entry) in rows.into_iter().flatten().enumerate() {
        if let Some((q, in_bounds, vis)) = entry {
            field.coords[i] = q;
            field.valid[i] = true;
            field.in_bounds[i] = in_bounds;
            visible[i] = vis;
        }
    }
    GtFlow { field, visible }
}

/// Ground-truth camera path generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// Circle of `radius` around `center` at the center's height, sweeping
    /// `arc_deg` degrees, always looking at `look_at`.
    Orbit {
        center: [f64; 3],
        radius: f64,
        arc_deg: f64,
        look_at: [f64; 3],
    },
    /// Constant linear and angular velocity per frame from a start pose.
    ConstantVelocity {
        start: [f64; 3],
        look_at: [f64; 3],
        velocity: [f64; 3],
        /// Rotation per frame as a body-frame rotation vector, radians.
        angular: [f64; 3],
    },
    /// Smoothed random walk seeded by `seed`.
    RandomWalk {
        start: [f64; 3],
        look_at: [f64; 3],
        step: f64,
        seed: u64,
    },
    /// A single pose repeated.
    Static { eye: [f64; 3], look_at: [f64; 3] },
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::Orbit {
            center: [0.0, 0.0, 0.0],
            radius: 0.5,
            arc_deg: 60.0,
            look_at: [0.0, 0.0, 2.5],
        }
    }
}

const UP: Vector3<f64> = Vector3::new(0.0, -1.0, 0.0);

impl TrajectorySpec {
    pub fn poses(&self, frames: usize) -> Vec<Pose> {
        match self {
            TrajectorySpec::Orbit {
                center,
                radius,
                arc_deg,
                look_at,
            } => {
                let c = Vector3::from(*center);
                let target = Vector3::from(*look_at);
                let steps = frames.saturating_sub(1).max(1) as f64;
                (0..frames)
                    .map(|i| {
                        let a = (arc_deg.to_radians()) * (i as f64 / steps - 0.5);
                        // Orbit in the floor plane, starting behind the center
                        // relative to the look-at target.
                        let eye = c + Vector3::new(radius * a.sin(), 0.0, -radius * a.cos());
                        Pose::look_at(eye, target, UP)
                    })
                    .collect()
            }
            TrajectorySpec::ConstantVelocity {
                start,
                look_at,
                velocity,
                angular,
            } => {
                let p0 = Pose::look_at(Vector3::from(*start), Vector3::from(*look_at), UP);
                let dr = UnitQuaternion::from_scaled_axis(Vector3::from(*angular));
                let v = Vector3::from(*velocity);
                let mut out = Vec::with_capacity(frames);
                let mut rot = *p0.rotation();
                for i in 0..frames {
                    out.push(Pose::new(rot, p0.translation() + v * i as f64));
                    rot *= dr;
                }
                out
            }
            TrajectorySpec::RandomWalk {
                start,
                look_at,
                step,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let target = Vector3::from(*look_at);
                let mut eye = Vector3::from(*start);
                let mut vel = Vector3::zeros();
                let mut out = Vec::with_capacity(frames);
                for _ in 0..frames {
                    out.push(Pose::look_at(eye, target, UP));
                    let kick = Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    );
                    vel = 0.8 * vel + 0.2 * kick * *step;
                    eye += vel;
                }
                out
            }
            TrajectorySpec::Static { eye, look_at } => {
                vec![Pose::look_at(Vector3::from(*eye), Vector3::from(*look_at), UP); frames]
            }
        }
    }
}

/// The default desk-scale camera: 160×120, fx = fy = 120.
pub fn desk_intrinsics() -> Intrinsics {
    Intrinsics::new(120.0, 120.0, 79.5, 59.5, 160, 120).expect("valid intrinsics")
}
