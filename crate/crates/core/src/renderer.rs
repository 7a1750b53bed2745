//! Tile-based splatting of a [`GaussianMap`] into color, depth and silhouette
//! images, with analytic gradients of an L1 image/depth loss.
//!
//! Each Gaussian projects to a circular footprint of radius `r·f̄/z` pixels
//! truncated at three standard deviations. Footprints are composited front to
//! back (ties broken by map index) with
//! `α = min(o·exp(−d²/2ρ²), 0.999)` until transmittance drops below `1e-4`.
//! Depth is the alpha-weighted mean depth normalized by the silhouette.

use nalgebra::{Matrix3, Vector2, Vector3, Vector6};

use crate::exec::Exec;
use crate::gaussian_map::{Gaussian, GaussianMap};
use crate::geometry::{Intrinsics, Pose, MIN_DEPTH};
use crate::image::{DepthMap, Grid, GrayImage, RgbImage};

pub const ALPHA_MAX: f64 = 0.999;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Footprint truncation in standard deviations.
pub const CUTOFF_SIGMA: f64 = 3.0;
const SILHOUETTE_EPS: f64 = 1e-8;
const TILE: usize = 16;

/// A Gaussian projected into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    pub center: Vector2<f64>,
    /// Footprint standard deviation in pixels.
    pub radius: f64,
    /// Camera-frame z of the center, meters.
    pub depth: f64,
}

/// Projects one Gaussian. Returns `None` behind the camera or when the
/// truncated footprint misses the image entirely.
pub fn project_splat(g: &Gaussian, camera: &Pose, k: &Intrinsics) -> Option<Splat> {
    let x = camera.inverse_transform_point(&g.center);
    splat_from_camera_point(&x, g.radius, k)
}

#[inline]
fn splat_from_camera_point(x: &Vector3<f64>, radius: f64, k: &Intrinsics) -> Option<Splat> {
    if x.z <= MIN_DEPTH {
        return None;
    }
    let center = Vector2::new(k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy);
    let rho = radius * k.focal() / x.z;
    // Distance from the center to the rectangle spanned by the pixel centers.
    let dx = (0.0 - center.x).max(center.x - (k.width as f64 - 1.0)).max(0.0);
    let dy = (0.0 - center.y).max(center.y - (k.height as f64 - 1.0)).max(0.0);
    if !center.x.is_finite() || !center.y.is_finite() || (dx * dx + dy * dy).sqrt() > CUTOFF_SIGMA * rho {
        return None;
    }
    Some(Splat {
        center,
        radius: rho,
        depth: x.z,
    })
}

#[derive(Debug, Clone, Copy)]
struct SortedSplat {
    index: usize,
    splat: Splat,
    cam: Vector3<f64>,
    opacity: f64,
    color: [f64; 3],
}

/// Per-render bookkeeping retained for the backward pass: the depth-sorted
/// splats, the per-tile splat lists, and for each pixel how far along its
/// tile list compositing ran.
#[derive(Debug, Clone)]
pub struct RenderTrace {
    splats: Vec<SortedSplat>,
    tiles_x: usize,
    bins: Vec<Vec<u32>>,
    /// Number of tile-list entries visited per pixel.
    visited: Vec<u32>,
}

impl RenderTrace {
    /// Map indices of the splats that contributed to pixel `(x, y)`, front to back.
    pub fn contributors(&self, x: usize, y: usize, width: usize) -> Vec<usize> {
        let bin = &self.bins[(y / TILE) * self.tiles_x + x / TILE];
        let n = self.visited[y * width + x] as usize;
        bin[..n]
            .iter()
            .filter_map(|&s| {
                let sp = &self.splats[s as usize];
                let d2 = (Vector2::new(x as f64, y as f64) - sp.splat.center).norm_squared();
                within_cutoff(d2, sp.splat.radius).then_some(sp.index)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: RgbImage,
    /// Silhouette-normalized depth; zero where the silhouette is zero.
    pub depth: GrayImage,
    pub silhouette: GrayImage,
    pub trace: Option<RenderTrace>,
}

impl RenderOutput {
    /// Rendered depth as a [`DepthMap`], valid where the silhouette exceeds
    /// `min_silhouette`.
    pub fn depth_map(&self, min_silhouette: f64) -> DepthMap {
        let w = self.depth.width();
        let h = self.depth.height();
        DepthMap::from_fn(w, h, |x, y| {
            (*self.silhouette.get(x, y) > min_silhouette).then(|| *self.depth.get(x, y))
        })
    }

    /// Fraction of pixels with silhouette above `threshold`.
    pub fn coverage(&self, threshold: f64) -> f64 {
        let n = self.silhouette.data().iter().filter(|s| **s > threshold).count();
        n as f64 / self.silhouette.len().max(1) as f64
    }
}

#[inline]
fn within_cutoff(d2: f64, rho: f64) -> bool {
    d2 <= (CUTOFF_SIGMA * rho) * (CUTOFF_SIGMA * rho)
}

/// Raw (unclipped) Gaussian falloff and clipped alpha.
#[inline]
fn alpha_at(d2: f64, rho: f64, opacity: f64) -> (f64, f64, bool) {
    let g = (-d2 / (2.0 * rho * rho)).exp();
    let raw = opacity * g;
    if raw > ALPHA_MAX {
        (g, ALPHA_MAX, true)
    } else {
        (g, raw, false)
    }
}

fn sorted_splats(map: &GaussianMap, camera: &Pose, k: &Intrinsics, exec: Exec) -> Vec<SortedSplat> {
    let gs = map.gaussians();
    let projected = exec.map(gs.len(), |i| {
        let g = &gs[i];
        let cam = camera.inverse_transform_point(&g.center);
        splat_from_camera_point(&cam, g.radius, k).map(|splat| SortedSplat {
            index: i,
            splat,
            cam,
            opacity: g.opacity,
            color: g.color,
        })
    });
    let mut splats: Vec<SortedSplat> = projected.into_iter().flatten().collect();
    splats.sort_by(|a, b| {
        a.splat
            .depth
            .total_cmp(&b.splat.depth)
            .then(a.index.cmp(&b.index))
    });
    splats
}

fn bin_splats(splats: &[SortedSplat], k: &Intrinsics) -> (usize, usize, Vec<Vec<u32>>) {
    let tiles_x = k.width.div_ceil(TILE);
    let tiles_y = k.height.div_ceil(TILE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    for (s, sp) in splats.iter().enumerate() {
        let reach = CUTOFF_SIGMA * sp.splat.radius;
        let c = sp.splat.center;
        let x0 = (c.x - reach).ceil().max(0.0) as usize;
        let y0 = (c.y - reach).ceil().max(0.0) as usize;
        let x1 = (c.x + reach).floor().min(k.width as f64 - 1.0);
        let y1 = (c.y + reach).floor().min(k.height as f64 - 1.0);
        if x1 < x0 as f64 || y1 < y0 as f64 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        for ty in y0 / TILE..=y1 / TILE {
            for tx in x0 / TILE..=x1 / TILE {
                bins[ty * tiles_x + tx].push(s as u32);
            }
        }
    }
    (tiles_x, tiles_y, bins)
}

#[derive(Debug, Clone, Copy, Default)]
struct PixelOut {
    color: [f64; 3],
    silhouette: f64,
    depth_sum: f64,
    visited: u32,
}

fn tile_bounds(tile: usize, tiles_x: usize, k: &Intrinsics) -> (usize, usize, usize, usize) {
    let tx = tile % tiles_x;
    let ty = tile / tiles_x;
    let x0 = tx * TILE;
    let y0 = ty * TILE;
    (x0, y0, (x0 + TILE).min(k.width), (y0 + TILE).min(k.height))
}

fn composite_pixel(px: f64, py: f64, bin: &[u32], splats: &[SortedSplat]) -> PixelOut {
    let mut out = PixelOut::default();
    let mut t = 1.0;
    for (n, &s) in bin.iter().enumerate() {
        let sp = &splats[s as usize];
        let dx = px - sp.splat.center.x;
        let dy = py - sp.splat.center.y;
        let d2 = dx * dx + dy * dy;
        if !within_cutoff(d2, sp.splat.radius) {
            continue;
        }
        let (_, alpha, _) = alpha_at(d2, sp.splat.radius, sp.opacity);
        let w = alpha * t;
        for c in 0..3 {
            out.color[c] += sp.color[c] * w;
        }
        out.silhouette += w;
        out.depth_sum += sp.splat.depth * w;
        t *= 1.0 - alpha;
        if t < MIN_TRANSMITTANCE {
            out.visited = n as u32 + 1;
            return out;
        }
    }
    out.visited = bin.len() as u32;
    out
}

fn forward(map: &GaussianMap, camera: &Pose, k: &Intrinsics, exec: Exec, keep_trace: bool) -> RenderOutput {
    let splats = sorted_splats(map, camera, k, exec);
    let (tiles_x, tiles_y, bins) = bin_splats(&splats, k);
    let tiles = exec.map(tiles_x * tiles_y, |tile| {
        let (x0, y0, x1, y1) = tile_bounds(tile, tiles_x, k);
        let mut px = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            for x in x0..x1 {
                px.push(composite_pixel(x as f64, y as f64, &bins[tile], &splats));
            }
        }
        px
    });

    let (w, h) = k.dims();
    let mut color = Grid::new(w, h, [0.0; 3]);
    let mut depth = Grid::new(w, h, 0.0);
    let mut silhouette = Grid::new(w, h, 0.0);
    let mut visited = vec![0u32; w * h];
    for (tile, px) in tiles.iter().enumerate() {
        let (x0, y0, x1, _) = tile_bounds(tile, tiles_x, k);
        let tw = x1 - x0;
        for (j, p) in px.iter().enumerate() {
            let x = x0 + j % tw;
            let y = y0 + j / tw;
            color.set(x, y, p.color);
            silhouette.set(x, y, p.silhouette);
            depth.set(x, y, p.depth_sum / p.silhouette.max(SILHOUETTE_EPS));
            visited[y * w + x] = p.visited;
        }
    }
    let trace = keep_trace.then_some(RenderTrace {
        splats,
        tiles_x,
        bins,
        visited,
    });
    RenderOutput {
        color,
        depth,
        silhouette,
        trace,
    }
}

/// Renders color, depth and silhouette of `map` seen from `camera`.
pub fn render(map: &GaussianMap, camera: &Pose, k: &Intrinsics) -> RenderOutput {
    render_with(map, camera, k, Exec::default())
}

pub fn render_with(map: &GaussianMap, camera: &Pose, k: &Intrinsics, exec: Exec) -> RenderOutput {
    forward(map, camera, k, exec, false)
}

/// Weighted L1 image + depth loss against a target view.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub target_color: &'a RgbImage,
    pub target_depth: &'a DepthMap,
    pub color_weight: f64,
    pub depth_weight: f64,
    /// When set, only pixels whose rendered silhouette exceeds this value
    /// contribute.
    pub silhouette_mask: Option<f64>,
}

/// Partial derivatives of the loss. The pose block is with respect to a
/// body-frame increment `camera ∘ exp(ξ)`, ordered `(ω, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients {
    pub centers: Vec<Vector3<f64>>,
    pub radii: Vec<f64>,
    pub opacities: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    pub pose: Vector6<f64>,
}

impl RenderGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            centers: vec![Vector3::zeros(); n],
            radii: vec![0.0; n],
            opacities: vec![0.0; n],
            colors: vec![[0.0; 3]; n],
            pose: Vector6::zeros(),
        }
    }

    pub fn add_assign(&mut self, other: &RenderGradients) {
        for i in 0..self.radii.len() {
            self.centers[i] += other.centers[i];
            self.radii[i] += other.radii[i];
            self.opacities[i] += other.opacities[i];
            for c in 0..3 {
                self.colors[i][c] += other.colors[i][c];
            }
        }
        self.pose += other.pose;
    }

    pub fn is_finite(&self) -> bool {
        self.centers.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.radii.iter().all(|x| x.is_finite())
            && self.opacities.iter().all(|x| x.is_finite())
            && self.colors.iter().all(|c| c.iter().all(|x| x.is_finite()))
            && self.pose.iter().all(|x| x.is_finite())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-pixel loss and its upstream derivatives with respect to the composited
/// color, silhouette and depth numerator.
fn pixel_loss(out: &RenderOutput, spec: &LossSpec, x: usize, y: usize) -> (f64, [f64; 3], f64, f64) {
    let sil = *out.silhouette.get(x, y);
    if spec.silhouette_mask.is_some_and(|t| sil <= t) {
        return (0.0, [0.0; 3], 0.0, 0.0);
    }
    let mut loss = 0.0;
    let mut g_color = [0.0; 3];
    if spec.color_weight != 0.0 {
        let c = out.color.get(x, y);
        let t = spec.target_color.get(x, y);
        for ch in 0..3 {
            let r = c[ch] - t[ch];
            loss += spec.color_weight * r.abs();
            g_color[ch] = spec.color_weight * sign(r);
        }
    }
    let (mut g_sil, mut g_num) = (0.0, 0.0);
    if spec.depth_weight != 0.0 {
        if let Some(target) = spec.target_depth.get(x, y) {
            let d = *out.depth.get(x, y);
            let r = d - target;
            loss += spec.depth_weight * r.abs();
            let g_d = spec.depth_weight * sign(r);
            if sil > SILHOUETTE_EPS {
                g_num = g_d / sil;
                g_sil = -g_d * d / sil;
            } else {
                g_num = g_d / SILHOUETTE_EPS;
            }
        }
    }
    (loss, g_color, g_sil, g_num)
}

/// Per-splat accumulator in image space: `[du, dv, dρ, dz, do, dr, dg, db]`.
type SplatGrad = [f64; 8];

/// Renders and returns the loss and its analytic gradients.
pub fn render_with_gradients(
    map: &GaussianMap,
    camera: &Pose,
    k: &Intrinsics,
    spec: &LossSpec,
) -> (f64, RenderGradients, RenderOutput) {
    render_with_gradients_exec(map, camera, k, spec, Exec::default())
}

pub fn render_with_gradients_exec(
    map: &GaussianMap,
    camera: &Pose,
    k: &Intrinsics,
    spec: &LossSpec,
    exec: Exec,
) -> (f64, RenderGradients, RenderOutput) {
    let out = forward(map, camera, k, exec, true);
    let trace = out.trace.as_ref().expect("traced render");
    let tiles_x = trace.tiles_x;
    let n_tiles = trace.bins.len();

    let tile_results = exec.map(n_tiles, |tile| {
        let bin = &trace.bins[tile];
        let mut grads: Vec<SplatGrad> = vec![[0.0; 8]; bin.len()];
        let mut loss = 0.0;
        let (x0, y0, x1, y1) = tile_bounds(tile, tiles_x, k);
        let mut scratch: Vec<(usize, f64, f64, f64, bool)> = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                let (l, g_color, g_sil, g_num) = pixel_loss(&out, spec, x, y);
                loss += l;
                if g_color == [0.0; 3] && g_sil == 0.0 && g_num == 0.0 {
                    continue;
                }
                let (pxf, pyf) = (x as f64, y as f64);
                // Replay the forward pass for this pixel.
                scratch.clear();
                let visited = trace.visited[y * k.width + x] as usize;
                let mut t = 1.0;
                for (e, &s) in bin[..visited].iter().enumerate() {
                    let sp = &trace.splats[s as usize];
                    let dx = pxf - sp.splat.center.x;
                    let dy = pyf - sp.splat.center.y;
                    let d2 = dx * dx + dy * dy;
                    if !within_cutoff(d2, sp.splat.radius) {
                        continue;
                    }
                    let (g, alpha, clipped) = alpha_at(d2, sp.splat.radius, sp.opacity);
                    scratch.push((e, alpha, t, g, clipped));
                    t *= 1.0 - alpha;
                }
                // Back to front with the running suffix Σ_{j>i} s_j α_j T_j.
                let mut suffix = 0.0;
                for &(e, alpha, t_i, g, clipped) in scratch.iter().rev() {
                    let sp = &trace.splats[bin[e] as usize];
                    let s_val = g_color[0] * sp.color[0]
                        + g_color[1] * sp.color[1]
                        + g_color[2] * sp.color[2]
                        + g_sil
                        + g_num * sp.splat.depth;
                    let w = alpha * t_i;
                    let d_alpha = t_i * s_val - suffix / (1.0 - alpha);
                    suffix += s_val * w;

                    let acc = &mut grads[e];
                    acc[3] += g_num * w;
                    acc[5] += g_color[0] * w;
                    acc[6] += g_color[1] * w;
                    acc[7] += g_color[2] * w;
                    if !clipped {
                        let rho = sp.splat.radius;
                        let rho2 = rho * rho;
                        let dx = pxf - sp.splat.center.x;
                        let dy = pyf - sp.splat.center.y;
                        acc[0] += d_alpha * alpha * dx / rho2;
                        acc[1] += d_alpha * alpha * dy / rho2;
                        acc[2] += d_alpha * alpha * (dx * dx + dy * dy) / (rho2 * rho);
                        acc[4] += d_alpha * g;
                    }
                }
            }
        }
        (loss, grads)
    });

    // Deterministic reduction: tiles in order, entries in order.
    let mut loss = 0.0;
    let mut per_splat: Vec<SplatGrad> = vec![[0.0; 8]; trace.splats.len()];
    for (tile, (l, grads)) in tile_results.iter().enumerate() {
        loss += l;
        for (e, g) in grads.iter().enumerate() {
            let acc = &mut per_splat[trace.bins[tile][e] as usize];
            for c in 0..8 {
                acc[c] += g[c];
            }
        }
    }

    let mut grads = RenderGradients::zeros(map.len());
    let rot: Matrix3<f64> = camera.rotation_matrix();
    let f_bar = k.focal();
    for (sp, g) in trace.splats.iter().zip(&per_splat) {
        let x = sp.cam;
        let z = x.z;
        let rho = sp.splat.radius;
        let g_x = Vector3::new(
            g[0] * k.fx / z,
            g[1] * k.fy / z,
            -g[0] * k.fx * x.x / (z * z) - g[1] * k.fy * x.y / (z * z) - g[2] * rho / z + g[3],
        );
        let i = sp.index;
        grads.centers[i] = rot * g_x;
        grads.radii[i] = g[2] * f_bar / z;
        grads.opacities[i] = g[4];
        grads.colors[i] = [g[5], g[6], g[7]];
        // camera ∘ exp(ξ) moves camera-frame points by −ω×x − v.
        let g_omega = g_x.cross(&x);
        grads.pose += Vector6::new(g_omega.x, g_omega.y, g_omega.z, -g_x.x, -g_x.y, -g_x.z);
    }
    (loss, grads, out)
}

/// Loss only, without gradients.
pub fn render_loss(map: &GaussianMap, camera: &Pose, k: &Intrinsics, spec: &LossSpec, exec: Exec) -> f64 {
    let out = forward(map, camera, k, exec, false);
    let mut loss = 0.0;
    for y in 0..k.height {
        for x in 0..k.width {
            loss += pixel_loss(&out, spec, x, y).0;
        }
    }
    loss
}
