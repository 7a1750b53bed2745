//! Feed-forward tracking: inertia prediction, spherical node sampling, node
//! rendering and the multi-edge pose solve.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dba::{self, DbaEdge, DbaError, DbaProblem, DbaSettings, DbaSolution, EdgeDirection};
use crate::error::{GeometryError, IoError};
use crate::exec::Exec;
use crate::flow::{corrected_correspondence, FlowError, FlowProvider, FlowRequest, NodeSource};
use crate::frame::Frame;
use crate::gaussian_map::GaussianMap;
use crate::geometry::{correspondence_field, Intrinsics, Pose};
use crate::image::{save_rgb_png, DepthMap, GrayImage, Grid, RgbImage};
use crate::renderer::render_with;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("map is empty")]
    EmptyMap,
    #[error("no previous posed frame")]
    NoPriorFrame,
    #[error("no usable edges")]
    NoEdges,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Dba(#[from] DbaError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Where sampled node positions are anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleBase {
    /// Offset from the previous camera position.
    #[default]
    Previous,
    /// Offset from the world origin.
    Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    /// Graph size: one real edge plus `nodes − 1` rendered ones.
    pub nodes: usize,
    pub alpha: f64,
    pub theta_deg: f64,
    pub seed: u64,
    /// Sampling radius used when the camera has not moved, meters.
    pub min_radius: f64,
    pub base: SampleBase,
    /// Seeded azimuth phase; zero phase when false.
    pub random_phase: bool,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self {
            nodes: 6,
            alpha: 5.0,
            theta_deg: 30.0,
            seed: 0,
            min_radius: 0.01,
            base: SampleBase::Previous,
            random_phase: true,
        }
    }
}

impl SamplingSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes < 1 {
            return Err("nodes must be at least 1".into());
        }
        if !(self.alpha > 0.0) {
            return Err("alpha must be positive".into());
        }
        if !(0.0..=90.0).contains(&self.theta_deg) {
            return Err("theta must lie in [0, 90] degrees".into());
        }
        Ok(())
    }
}

/// Constant-velocity prediction: rotation of the previous pose, translation
/// extrapolated linearly.
pub fn inertia_extrapolate(prev: &Pose, prev2: &Pose) -> Pose {
    prev.with_translation(2.0 * prev.translation() - prev2.translation())
}

/// Inertia direction and sampling radius.
fn inertia_cone(prev: &Pose, prev2: &Pose, s: &SamplingSettings) -> (Vector3<f64>, f64) {
    let delta = prev.translation() - prev2.translation();
    let n = delta.norm();
    if n < 1e-9 {
        (prev.rotation() * Vector3::z(), s.min_radius)
    } else {
        (delta / n, s.alpha * n)
    }
}

/// `nodes − 1` poses with the previous rotation, placed on a sphere of
/// radius `α‖ΔT‖` at angle `θ` from the inertia direction, equally spaced in
/// azimuth.
pub fn spherical_sample(prev: &Pose, prev2: &Pose, s: &SamplingSettings) -> Vec<Pose> {
    let count = s.nodes.saturating_sub(1);
    if count == 0 {
        return Vec::new();
    }
    let (u, rho) = inertia_cone(prev, prev2, s);
    // Any fixed perpendicular works as the azimuth reference.
    let helper = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = u.cross(&helper).normalize();
    let e2 = u.cross(&e1);
    let phase = if s.random_phase {
        ChaCha8Rng::seed_from_u64(s.seed).gen_range(0.0..std::f64::consts::TAU)
    } else {
        0.0
    };
    let theta = s.theta_deg.to_radians();
    let base = match s.base {
        SampleBase::Previous => *prev.translation(),
        SampleBase::Origin => Vector3::zeros(),
    };
    (0..count)
        .map(|k| {
            let phi = phase + std::f64::consts::TAU * k as f64 / count as f64;
            let v = u * theta.cos() + (e1 * phi.cos() + e2 * phi.sin()) * theta.sin();
            prev.with_translation(base + v * rho)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub pose: Pose,
    pub color: RgbImage,
    /// Full-resolution depth; rendered nodes keep pixels with silhouette > 0.5.
    pub depth: DepthMap,
    pub silhouette: GrayImage,
    pub source: NodeSource,
    pub coverage: f64,
}

impl GraphNode {
    pub fn is_rendered(&self) -> bool {
        matches!(self.source, NodeSource::Rendered(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSettings {
    pub sampling: SamplingSettings,
    pub divisor: usize,
    /// Flow-query and solve rounds per frame.
    pub outer_rounds: usize,
    pub dba: DbaSettings,
    /// Rendered nodes covering less of the image than this are dropped.
    pub min_coverage: f64,
    /// Silhouette above which rendered depth counts as valid.
    pub node_silhouette: f64,
    pub direction: EdgeDirection,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TrackerSettings {
    fn default() -> Self {
        Self {
            sampling: SamplingSettings::default(),
            divisor: 8,
            outer_rounds: 3,
            dba: DbaSettings::default(),
            min_coverage: 0.2,
            node_silhouette: 0.5,
            direction: EdgeDirection::NeighborToTarget,
            exec: Exec::default(),
        }
    }
}

/// Node 0 is the real previous frame; the rest are renders at `samples`.
pub fn build_graph(
    map: &GaussianMap,
    prev: (&Frame, &Pose),
    samples: &[Pose],
    k: &Intrinsics,
    settings: &TrackerSettings,
) -> Result<Vec<GraphNode>, TrackError> {
    if map.is_empty() {
        return Err(TrackError::EmptyMap);
    }
    let (frame, pose) = prev;
    let mut nodes = vec![GraphNode {
        pose: *pose,
        color: frame.rgb.clone(),
        depth: frame.depth.clone(),
        silhouette: Grid::new(k.width, k.height, 1.0),
        source: NodeSource::Frame(frame.index),
        coverage: 1.0,
    }];
    let rendered = settings.exec.map(samples.len(), |i| {
        let out = render_with(map, &samples[i], k, settings.exec);
        let coverage = out.coverage(0.5);
        GraphNode {
            pose: samples[i],
            depth: out.depth_map(settings.node_silhouette),
            color: out.color,
            silhouette: out.silhouette,
            source: NodeSource::Rendered(samples[i]),
            coverage,
        }
    });
    nodes.extend(rendered.into_iter().filter(|n| n.coverage >= settings.min_coverage));
    Ok(nodes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardResult {
    pub pose: Pose,
    /// Inertia prediction used as the initial guess.
    pub initial: Pose,
    pub solution: DbaSolution,
    pub nodes: usize,
    pub edges: usize,
    pub graph: Option<Vec<GraphNode>>,
}

fn mix_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Full feed-forward estimate of the target pose. `history` holds the
/// previous posed frames, oldest first; the last two drive the prediction.
/// With a single prior frame the camera is assumed static.
pub fn feedforward_track(
    map: &GaussianMap,
    history: &[(&Frame, Pose)],
    target: &Frame,
    flow: &dyn FlowProvider,
    settings: &TrackerSettings,
    keep_graph: bool,
) -> Result<FeedForwardResult, TrackError> {
    let Some(&(prev_frame, prev_pose)) = history.last() else {
        return Err(TrackError::NoPriorFrame);
    };
    let prev2_pose = if history.len() >= 2 {
        history[history.len() - 2].1
    } else {
        prev_pose
    };
    let initial = inertia_extrapolate(&prev_pose, &prev2_pose);
    let sampling = SamplingSettings {
        seed: mix_seed(settings.sampling.seed, target.index),
        ..settings.sampling
    };
    let samples = if map.is_empty() {
        Vec::new()
    } else {
        spherical_sample(&prev_pose, &prev2_pose, &sampling)
    };
    let k = &target.intrinsics;
    let nodes = if map.is_empty() {
        build_graph_without_map(prev_frame, &prev_pose, k)
    } else {
        build_graph(map, (prev_frame, &prev_pose), &samples, k, settings)?
    };

    let d = settings.divisor;
    let kc = k.coarse(d);
    let coarse_depth: Vec<DepthMap> = nodes.iter().map(|n| n.depth.downsample(d)).collect();
    let mut pose = initial;
    let mut last: Option<(DbaSolution, usize)> = None;
    for _round in 0..settings.outer_rounds.max(1) {
        let edges = settings.exec.map(nodes.len(), |e| {
            build_edge(&nodes[e], &coarse_depth[e], &pose, target, &kc, d, e, flow, settings.direction)
        });
        let mut usable = Vec::with_capacity(edges.len());
        for e in edges {
            if let Some(edge) = e? {
                usable.push(edge);
            }
        }
        if usable.is_empty() {
            return Err(TrackError::NoEdges);
        }
        let n_edges = usable.len();
        let problem = DbaProblem {
            edges: usable,
            initial: pose,
            intrinsics: kc,
            settings: settings.dba,
            exec: settings.exec,
        };
        let sol = match dba::solve(&problem) {
            Ok(s) => s,
            Err(DbaError::ZeroWeights) if last.is_some() => break,
            Err(e) => return Err(e.into()),
        };
        pose = sol.pose;
        last = Some((sol, n_edges));
    }
    let (solution, edges) = last.expect("at least one round");
    Ok(FeedForwardResult {
        pose,
        initial,
        solution,
        nodes: nodes.len(),
        edges,
        graph: keep_graph.then_some(nodes),
    })
}

fn build_graph_without_map(frame: &Frame, pose: &Pose, k: &Intrinsics) -> Vec<GraphNode> {
    vec![GraphNode {
        pose: *pose,
        color: frame.rgb.clone(),
        depth: frame.depth.clone(),
        silhouette: Grid::new(k.width, k.height, 1.0),
        source: NodeSource::Frame(frame.index),
        coverage: 1.0,
    }]
}

#[allow(clippy::too_many_arguments)]
fn build_edge(
    node: &GraphNode,
    depth: &DepthMap,
    target_pose: &Pose,
    target: &Frame,
    kc: &Intrinsics,
    divisor: usize,
    index: usize,
    flow: &dyn FlowProvider,
    direction: EdgeDirection,
) -> Result<Option<DbaEdge>, TrackError> {
    let (src_depth, prior, source) = match direction {
        EdgeDirection::NeighborToTarget => (
            depth.clone(),
            correspondence_field(depth, &node.pose, target_pose, kc)?,
            node.source,
        ),
        EdgeDirection::TargetToNeighbor => {
            let d = target.depth.downsample(divisor);
            let prior = correspondence_field(&d, target_pose, &node.pose, kc)?;
            (d, prior, NodeSource::Frame(target.index))
        }
    };
    let (req_target, source_image, target_image) = match direction {
        EdgeDirection::NeighborToTarget => (target.index, Some(&node.color), Some(&target.rgb)),
        EdgeDirection::TargetToNeighbor => match node.source {
            NodeSource::Frame(i) => (i, Some(&target.rgb), Some(&node.color)),
            // Flow into a rendered view has no frame index to address it.
            NodeSource::Rendered(_) => return Ok(None),
        },
    };
    let req = FlowRequest {
        source,
        target: req_target,
        source_image,
        target_image,
        prior: &prior,
        divisor,
        edge: index,
    };
    let field = match flow.flow(&req) {
        Ok(f) => f,
        Err(FlowError::Unavailable(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let corrected = corrected_correspondence(&prior, &field)?;
    let weights = (0..corrected.len())
        .map(|i| if corrected.valid[i] { field.confidence[i] } else { [0.0; 2] })
        .collect();
    Ok(Some(DbaEdge {
        neighbor_pose: node.pose,
        direction,
        depth: src_depth,
        target: corrected,
        weights,
    }))
}

/// Writes node poses as TUM lines (timestamp = node index) and node images.
pub fn dump_graph(nodes: &[GraphNode], dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut lines = String::from("# node tx ty tz qx qy qz qw\n");
    for (i, n) in nodes.iter().enumerate() {
        let t = n.pose.translation();
        let q = n.pose.quaternion_xyzw();
        lines.push_str(&format!(
            "{i} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\n",
            t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        ));
        save_rgb_png(&n.color, &dir.join(format!("node_{i:02}.png")))?;
    }
    let path = dir.join("nodes.txt");
    std::fs::write(&path, lines).map_err(|e| IoError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowNoise, OracleFlow};
    use crate::gaussian_map::{init_from_depth, MapSettings};
    use crate::io::synthetic::{desk_intrinsics, render_synthetic, SceneSpec, SyntheticScene};
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn inertia_cases() {
        let z = Pose::identity();
        assert_eq!(inertia_extrapolate(&z, &z).translation(), &Vector3::zeros());
        let r = UnitQuaternion::from_scaled_axis(Vector3::new(0.1, 0.2, 0.3));
        let prev = Pose::new(r, Vector3::new(0.1, 0.0, 0.0));
        let p = inertia_extrapolate(&prev, &z);
        assert!(close(p.translation(), &Vector3::new(0.2, 0.0, 0.0), 1e-15));
        assert_eq!(p.rotation(), prev.rotation());
    }

    proptest! {
        #[test]
        fn inertia_matches_formula(
            a in prop::array::uniform3(-5.0f64..5.0),
            b in prop::array::uniform3(-5.0f64..5.0),
            w in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let prev = Pose::new(UnitQuaternion::from_scaled_axis(Vector3::from(w)), Vector3::from(a));
            let prev2 = Pose::from_translation(Vector3::from(b));
            let p = inertia_extrapolate(&prev, &prev2);
            for i in 0..3 {
                prop_assert!((p.translation()[i] - (2.0 * a[i] - b[i])).abs() <= 1e-12);
            }
            prop_assert_eq!(p.rotation(), prev.rotation());
        }

        #[test]
        fn samples_lie_on_cone(
            a in prop::array::uniform3(-2.0f64..2.0),
            d in prop::array::uniform3(-0.1f64..0.1),
            theta in 0.0f64..90.0,
            seed in any::<u64>(),
        ) {
            let prev2 = Pose::from_translation(Vector3::from(a));
            let prev = Pose::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(0.2, -0.1, 0.4)),
                Vector3::from(a) + Vector3::from(d),
            );
            prop_assume!(Vector3::from(d).norm() > 1e-6);
            let s = SamplingSettings { nodes: 6, theta_deg: theta, seed, ..Default::default() };
            let u = Vector3::from(d).normalize();
            let rho = s.alpha * Vector3::from(d).norm();
            for p in spherical_sample(&prev, &prev2, &s) {
                let off = p.translation() - prev.translation();
                prop_assert!((off.norm() - rho).abs() <= 1e-12);
                let ang = off.normalize().dot(&u).clamp(-1.0, 1.0).acos();
                prop_assert!((ang - theta.to_radians()).abs() <= 1e-7, "{} vs {}", ang, theta);
                prop_assert_eq!(p.rotation(), prev.rotation());
            }
        }
    }

    #[test]
    fn zero_theta_collapses() {
        let prev2 = Pose::identity();
        let prev = Pose::from_translation(Vector3::new(0.0, 0.02, 0.0));
        let s = SamplingSettings {
            theta_deg: 0.0,
            ..Default::default()
        };
        let samples = spherical_sample(&prev, &prev2, &s);
        assert_eq!(samples.len(), 5);
        for p in &samples {
            assert!(close(p.translation(), &Vector3::new(0.0, 0.12, 0.0), 1e-12));
        }
    }

    #[test]
    fn zero_phase_azimuths_are_equally_spaced() {
        let prev2 = Pose::identity();
        let prev = Pose::from_translation(Vector3::new(0.01, 0.02, -0.01));
        let s = SamplingSettings {
            random_phase: false,
            ..Default::default()
        };
        let u = prev.translation().normalize();
        let mut az: Vec<f64> = spherical_sample(&prev, &prev2, &s)
            .iter()
            .map(|p| {
                let off = p.translation() - prev.translation();
                let perp = off - u * off.dot(&u);
                // Azimuth in an independently chosen frame around u.
                let a = u.cross(&Vector3::new(0.0, 0.0, 1.0)).normalize();
                let b = u.cross(&a);
                perp.dot(&b).atan2(perp.dot(&a))
            })
            .collect();
        az.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let gaps: Vec<f64> = (0..5)
            .map(|i| (if i == 4 { az[0] + std::f64::consts::TAU } else { az[i + 1] }) - az[i])
            .collect();
        for g in gaps {
            assert!((g - 72f64.to_radians()).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_inertia_uses_forward_axis() {
        let prev = Pose::from_rotation(UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.5, 0.0)));
        let s = SamplingSettings {
            theta_deg: 0.0,
            nodes: 2,
            ..Default::default()
        };
        let p = spherical_sample(&prev, &prev, &s);
        let fwd = prev.rotation() * Vector3::z();
        assert!(close(p[0].translation(), &(fwd * 0.01), 1e-12));
    }

    #[test]
    fn origin_base_ignores_position() {
        let prev2 = Pose::from_translation(Vector3::new(1.0, 1.0, 1.0));
        let prev = Pose::from_translation(Vector3::new(1.1, 1.0, 1.0));
        let s = SamplingSettings {
            theta_deg: 0.0,
            base: SampleBase::Origin,
            ..Default::default()
        };
        let p = spherical_sample(&prev, &prev2, &s);
        assert!(close(p[0].translation(), &Vector3::new(0.5, 0.0, 0.0), 1e-12));
    }

    struct Room {
        scene: SyntheticScene,
        k: Intrinsics,
        gt: Vec<Pose>,
        map: GaussianMap,
        frames: Vec<Frame>,
    }

    fn room(gt: Vec<Pose>) -> Room {
        let scene = SyntheticScene::new(SceneSpec::default());
        let k = desk_intrinsics();
        let settings = MapSettings {
            stride: 2,
            init_scale: 2.0,
            init_opacity: 1.0,
            ..Default::default()
        };
        let mut map = GaussianMap::new();
        let mut frames = Vec::new();
        for (i, p) in gt.iter().enumerate() {
            let (rgb, depth) = render_synthetic(&scene, p, &k);
            if i == 0 {
                map.extend(init_from_depth(&rgb, &depth, &Pose::identity(), &k, None, &settings), 0);
            }
            frames.push(Frame::new(i, i as f64, rgb, depth, k).unwrap());
        }
        Room {
            scene,
            k,
            gt,
            map,
            frames,
        }
    }

    fn oracle(r: &Room, noise: FlowNoise) -> OracleFlow {
        let mut o = OracleFlow::new(r.scene.clone(), r.gt.clone(), r.k, noise, 1);
        o.anchor = r.gt[0];
        o
    }

    fn rel(r: &Room, i: usize) -> Pose {
        r.gt[0].inverse().compose(&r.gt[i])
    }

    fn orbit() -> Vec<Pose> {
        (0..4)
            .map(|i| {
                Pose::look_at(
                    Vector3::new(0.01 * i as f64, 0.002 * i as f64, 0.005 * i as f64),
                    Vector3::new(0.5, 0.1, 2.5),
                    -Vector3::y(),
                )
            })
            .collect()
    }

    #[test]
    fn graph_sizes_and_render_determinism() {
        let r = room(orbit());
        let s = TrackerSettings::default();
        let one = build_graph(&r.map, (&r.frames[0], &Pose::identity()), &[], &r.k, &s).unwrap();
        assert_eq!(one.len(), 1);
        assert!(!one[0].is_rendered());
        let prev = Pose::identity();
        let nodes = build_graph(&r.map, (&r.frames[0], &prev), &[prev], &r.k, &s).unwrap();
        let direct = crate::renderer::render(&r.map, &prev, &r.k);
        assert_eq!(nodes[1].color, direct.color);
        let samples = spherical_sample(&rel(&r, 1), &rel(&r, 0), &s.sampling);
        let nodes = build_graph(&r.map, (&r.frames[1], &rel(&r, 1)), &samples, &r.k, &s).unwrap();
        assert!(nodes.len() >= 6, "{} nodes", nodes.len());
        assert!(matches!(
            build_graph(&GaussianMap::new(), (&r.frames[0], &prev), &samples, &r.k, &s),
            Err(TrackError::EmptyMap)
        ));
    }

    #[test]
    fn static_camera_is_a_fixed_point() {
        let eye = Pose::look_at(Vector3::zeros(), Vector3::new(0.5, 0.1, 2.5), -Vector3::y());
        let r = room(vec![eye; 3]);
        let flow = oracle(&r, FlowNoise::exact());
        let history = [(&r.frames[0], Pose::identity()), (&r.frames[1], Pose::identity())];
        let mut s = TrackerSettings::default();
        s.sampling.nodes = 1;
        let res = feedforward_track(&r.map, &history, &r.frames[2], &flow, &s, false).unwrap();
        assert!(res.pose.angle_to(&Pose::identity()) < 1e-6);
        assert!(res.pose.distance_to(&Pose::identity()) < 1e-6);
        // Rendered nodes carry the map's depth error, so they only stay close.
        s.sampling.nodes = 6;
        let res = feedforward_track(&r.map, &history, &r.frames[2], &flow, &s, false).unwrap();
        eprintln!("static N=6: {} rad {} m", res.pose.angle_to(&Pose::identity()), res.pose.distance_to(&Pose::identity()));
        assert!(res.pose.angle_to(&Pose::identity()) < 1e-3);
        assert!(res.pose.distance_to(&Pose::identity()) < 1e-3);
    }

    #[test]
    fn exact_flow_recovers_pose_from_perturbed_history() {
        let r = room(orbit());
        let flow = oracle(&r, FlowNoise::exact());
        let s = TrackerSettings {
            divisor: 4,
            ..Default::default()
        };
        let history = [(&r.frames[1], rel(&r, 1)), (&r.frames[2], rel(&r, 2))];
        let res = feedforward_track(&r.map, &history, &r.frames[3], &flow, &s, false).unwrap();
        let gt = rel(&r, 3);
        assert!(res.pose.angle_to(&gt) < 1e-3, "{}", res.pose.angle_to(&gt));
        assert!(res.pose.distance_to(&gt) < 1e-3, "{}", res.pose.distance_to(&gt));
        assert!(res.edges >= 2);
    }

    #[test]
    fn tracking_is_deterministic() {
        let r = room(orbit());
        let flow = oracle(&r, FlowNoise::default());
        let history = [(&r.frames[1], rel(&r, 1)), (&r.frames[2], rel(&r, 2))];
        let s = TrackerSettings::default();
        let a = feedforward_track(&r.map, &history, &r.frames[3], &flow, &s, false).unwrap();
        let b = feedforward_track(&r.map, &history, &r.frames[3], &flow, &s, false).unwrap();
        assert_eq!(a, b);
        let seq = TrackerSettings {
            exec: Exec::Sequential,
            ..s
        };
        let c = feedforward_track(&r.map, &history, &r.frames[3], &flow, &seq, false).unwrap();
        assert_eq!(a.pose, c.pose);
    }

    #[test]
    fn no_history_is_an_error() {
        let r = room(orbit());
        let flow = oracle(&r, FlowNoise::exact());
        assert!(matches!(
            feedforward_track(&r.map, &[], &r.frames[1], &flow, &TrackerSettings::default(), false),
            Err(TrackError::NoPriorFrame)
        ));
    }

    #[test]
    fn dump_writes_nodes() {
        let r = room(orbit());
        let s = TrackerSettings::default();
        let samples = spherical_sample(&rel(&r, 1), &rel(&r, 0), &s.sampling);
        let nodes = build_graph(&r.map, (&r.frames[1], &rel(&r, 1)), &samples, &r.k, &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        dump_graph(&nodes, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("nodes.txt")).unwrap();
        assert_eq!(text.lines().count(), nodes.len() + 1);
        assert!(dir.path().join("node_00.png").exists());
    }
}
