//! The scene map: a growable set of isotropic 3D Gaussians lifted from
//! pseudo-depth.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{backproject, Intrinsics, Pose};
use crate::image::{DepthMap, Grid, GrayImage, RgbImage};

/// Isotropic Gaussian `o·exp(−‖x−μ‖²/2r²)` with an RGB color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Gaussian {
    /// Density of the unit element at world point `x`.
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        let d2 = (x - self.center).norm_squared();
        self.opacity * (-d2 / (2.0 * self.radius * self.radius)).exp()
    }

    /// Clamps opacity and color into `[0, 1]` and the radius into `[r_min, r_max]`.
    pub fn clamp(&mut self, r_min: f64, r_max: f64) {
        self.opacity = self.opacity.clamp(0.0, 1.0);
        for c in &mut self.color {
            *c = c.clamp(0.0, 1.0);
        }
        self.radius = self.radius.clamp(r_min, r_max);
    }

    pub fn is_valid(&self) -> bool {
        self.radius > 0.0
            && (0.0..=1.0).contains(&self.opacity)
            && self.color.iter().all(|c| (0.0..=1.0).contains(c))
            && self.center.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    /// Opacity of freshly lifted Gaussians.
    pub init_opacity: f64,
    /// Radius in units of the pixel footprint `d / fx`.
    pub init_scale: f64,
    /// Pixel subsampling for lifting and densification.
    pub stride: usize,
    /// Silhouette below which a pixel counts as unexplained.
    pub silhouette_threshold: f64,
    /// Relative depth error above which a pixel counts as unexplained.
    pub depth_threshold: f64,
    pub prune_opacity: f64,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            init_opacity: 0.5,
            init_scale: 1.0,
            stride: 1,
            silhouette_threshold: 0.5,
            depth_threshold: 0.05,
            prune_opacity: 0.005,
            min_radius: 1e-4,
            max_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianMap {
    gaussians: Vec<Gaussian>,
    created: Vec<u32>,
}

impl GaussianMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_gaussians(gaussians: Vec<Gaussian>) -> Self {
        let created = vec![0; gaussians.len()];
        Self { gaussians, created }
    }

    pub fn from_parts(gaussians: Vec<Gaussian>, created: Vec<u32>) -> Self {
        assert_eq!(gaussians.len(), created.len());
        Self { gaussians, created }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn gaussians_mut(&mut self) -> &mut [Gaussian] {
        &mut self.gaussians
    }

    /// Frame index at which each Gaussian was created.
    pub fn created(&self) -> &[u32] {
        &self.created
    }

    pub fn extend(&mut self, new: impl IntoIterator<Item = Gaussian>, frame: u32) {
        for g in new {
            self.gaussians.push(g);
            self.created.push(frame);
        }
    }

    /// Applies a rigid transform to every center.
    pub fn transformed(&self, w: &Pose) -> GaussianMap {
        let mut out = self.clone();
        for g in &mut out.gaussians {
            g.center = w.transform_point(&g.center);
        }
        out
    }

    /// Removes Gaussians that are nearly transparent or whose radius left
    /// `[min_radius, max_radius]`. Returns the number removed.
    pub fn prune(&mut self, settings: &MapSettings) -> usize {
        let keep: Vec<bool> = self
            .gaussians
            .iter()
            .map(|g| survives_prune(g, settings))
            .collect();
        let before = self.len();
        let mut i = 0;
        self.gaussians.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut j = 0;
        self.created.retain(|_| {
            j += 1;
            keep[j - 1]
        });
        before - self.len()
    }
}

pub fn survives_prune(g: &Gaussian, s: &MapSettings) -> bool {
    g.opacity >= s.prune_opacity && g.radius >= s.min_radius && g.radius <= s.max_radius
}

/// Lifts one Gaussian per selected strided pixel with valid depth. Pixels are
/// visited on the grid `(stride·i, stride·j)`; `mask`, when given, further
/// restricts the selection.
pub fn init_from_depth(
    rgb: &RgbImage,
    depth: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
    mask: Option<&Grid<bool>>,
    settings: &MapSettings,
) -> Vec<Gaussian> {
    let stride = settings.stride.max(1);
    let mut out = Vec::new();
    for y in (0..k.height).step_by(stride) {
        for x in (0..k.width).step_by(stride) {
            if mask.is_some_and(|m| !*m.get(x, y)) {
                continue;
            }
            let Some(d) = depth.get(x, y) else { continue };
            let Ok(pc) = backproject(&Vector2::new(x as f64, y as f64), d, k) else {
                continue;
            };
            out.push(Gaussian {
                center: pose.transform_point(&pc),
                radius: d / k.fx * settings.init_scale,
                opacity: settings.init_opacity,
                color: *rgb.get(x, y),
            });
        }
    }
    out
}

/// Pixels the current map fails to explain: low silhouette, or valid depth
/// whose rendered value is off by more than the relative threshold.
pub fn unexplained_mask(
    depth: &DepthMap,
    silhouette: &GrayImage,
    rendered_depth: &GrayImage,
    settings: &MapSettings,
) -> Grid<bool> {
    Grid::from_fn(depth.width(), depth.height(), |x, y| {
        let sil = *silhouette.get(x, y);
        match depth.get(x, y) {
            None => false,
            Some(d) => {
                sil < settings.silhouette_threshold
                    || (rendered_depth.get(x, y) - d).abs() > settings.depth_threshold * d
            }
        }
    })
}

/// Adds Gaussians at the unexplained strided pixels of `frame`. Returns the
/// number added.
#[allow(clippy::too_many_arguments)]
pub fn densify(
    map: &mut GaussianMap,
    rgb: &RgbImage,
    depth: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
    silhouette: &GrayImage,
    rendered_depth: &GrayImage,
    frame_index: u32,
    settings: &MapSettings,
) -> usize {
    let mask = unexplained_mask(depth, silhouette, rendered_depth, settings);
    let new = init_from_depth(rgb, depth, pose, k, Some(&mask), settings);
    let n = new.len();
    map.extend(new, frame_index);
    n
}
