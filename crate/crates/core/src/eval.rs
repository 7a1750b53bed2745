//! Trajectory and image quality metrics.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::geometry::Pose;
use crate::image::{DepthMap, Grid, RgbImage};

/// Timestamp association tolerance, seconds.
pub const ASSOCIATION_TOLERANCE: f64 = 0.02;
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least 3 associated pairs, found {0}")]
    TooFewPairs(usize),
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("no jointly valid depth pixels")]
    NoValidPixels,
    #[error("timestamps not strictly increasing at entry {0}")]
    NonMonotonic(usize),
    #[error("image too small for the metric window")]
    TooSmall,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    entries: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(entries: Vec<(f64, Pose)>) -> Result<Self, EvalError> {
        for i in 1..entries.len() {
            if !(entries[i].0 > entries[i - 1].0) {
                return Err(EvalError::NonMonotonic(i));
            }
        }
        Ok(Self { entries })
    }

    /// Builds a trajectory with timestamps `0, 1, 2, …`.
    pub fn from_poses(poses: &[Pose]) -> Self {
        Self {
            entries: poses.iter().enumerate().map(|(i, p)| (i as f64, *p)).collect(),
        }
    }

    pub fn entries(&self) -> &[(f64, Pose)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.entries.iter().map(|(_, p)| p)
    }

    /// Applies `w ∘ pose` to every entry.
    pub fn transformed(&self, w: &Pose) -> Trajectory {
        Trajectory {
            entries: self.entries.iter().map(|(t, p)| (*t, w.compose(p))).collect(),
        }
    }
}

/// Nearest-timestamp pairs within the tolerance, as index pairs `(est, gt)`.
/// Each ground-truth entry is used at most once.
pub fn associate(est: &Trajectory, gt: &Trajectory, tolerance: f64) -> Vec<(usize, usize)> {
    let g = gt.entries();
    let mut used = vec![false; g.len()];
    let mut out = Vec::new();
    let mut j = 0;
    for (i, (t, _)) in est.entries().iter().enumerate() {
        while j + 1 < g.len() && g[j + 1].0 <= *t {
            j += 1;
        }
        let mut best: Option<usize> = None;
        for c in [j, j + 1] {
            if c < g.len() && !used[c] && (g[c].0 - t).abs() <= tolerance {
                if best.is_none_or(|b| (g[c].0 - t).abs() < (g[b].0 - t).abs()) {
                    best = Some(c);
                }
            }
        }
        if let Some(b) = best {
            used[b] = true;
            out.push((i, b));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Maps estimated positions onto ground truth.
    pub transform: Pose,
    /// Scale factor; 1 for rigid alignment.
    pub scale: f64,
    /// Sum of squared position residuals after alignment, m².
    pub residual: f64,
    pub pairs: usize,
    /// Positions (nearly) collinear: rotation about that line is unobservable.
    pub degenerate: bool,
}

impl Alignment {
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.transform.rotation() * (x * self.scale) + self.transform.translation()
    }
}

/// Closed-form least-squares alignment of `src` points onto `dst` points.
pub fn align_points(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<Alignment, EvalError> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(EvalError::TooFewPairs(n.min(dst.len())));
    }
    let mu_s = src.iter().sum::<Vector3<f64>>() / n as f64;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        cov += (d - mu_d) * (s - mu_s).transpose();
        var_s += (s - mu_s).norm_squared();
    }
    cov /= n as f64;
    var_s /= n as f64;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let sv = svd.singular_values;
    let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).expect("three values");
    let largest = (0..3).max_by(|&a, &b| sv[a].total_cmp(&sv[b])).expect("three values");
    let mut sign = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        sign[smallest] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&sign) * v_t;
    let middle = 3 - smallest - largest;
    let degenerate = smallest == largest || sv[middle] <= 1e-10 * sv[largest].max(f64::MIN_POSITIVE);
    let scale = if with_scale && var_s > 0.0 { sv.dot(&sign) / var_s } else { 1.0 };
    let rotation = UnitQuaternion::from_matrix(&r);
    let t = mu_d - rotation * (mu_s * scale);
    let transform = Pose::new(rotation, t);
    let mut out = Alignment {
        transform,
        scale,
        residual: 0.0,
        pairs: n,
        degenerate,
    };
    out.residual = src.iter().zip(dst).map(|(s, d)| (out.apply(s) - d).norm_squared()).sum();
    Ok(out)
}

/// Rigid (or similarity) alignment of associated positions.
pub fn align_rigid(est: &Trajectory, gt: &Trajectory, with_scale: bool) -> Result<Alignment, EvalError> {
    let (src, dst) = associated_positions(est, gt);
    align_points(&src, &dst, with_scale)
}

fn associated_positions(est: &Trajectory, gt: &Trajectory) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    associate(est, gt, ASSOCIATION_TOLERANCE)
        .into_iter()
        .map(|(i, j)| (*est.entries()[i].1.translation(), *gt.entries()[j].1.translation()))
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteReport {
    pub rmse_cm: f64,
    pub pairs: usize,
    pub alignment: Alignment,
}

/// Absolute trajectory error after alignment, centimeters.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory, with_scale: bool) -> Result<AteReport, EvalError> {
    let alignment = align_rigid(est, gt, with_scale)?;
    let rmse_cm = (alignment.residual / alignment.pairs as f64).sqrt() * 100.0;
    Ok(AteReport {
        rmse_cm,
        pairs: alignment.pairs,
        alignment,
    })
}

fn check_dims<A, B>(a: &Grid<A>, b: &Grid<B>) -> Result<(), EvalError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(EvalError::DimensionMismatch((a.width(), a.height()), (b.width(), b.height())))
    }
}

/// Peak signal-to-noise ratio for unit-range images, capped at 99 dB.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64, EvalError> {
    check_dims(a, b)?;
    let n = (a.len() * 3) as f64;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (0..3).map(|c| (x[c] - y[c]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    if mse < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "valid" filtering of a single-channel plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM and mean contrast-structure term of one channel.
fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> (f64, f64) {
    let k = gaussian_kernel();
    let prod = |f: &dyn Fn(usize) -> f64| (0..a.len()).map(f).collect::<Vec<f64>>();
    let (mu_a, ow, oh) = filter_valid(a, w, h, &k);
    let (mu_b, _, _) = filter_valid(b, w, h, &k);
    let (aa, _, _) = filter_valid(&prod(&|i| a[i] * a[i]), w, h, &k);
    let (bb, _, _) = filter_valid(&prod(&|i| b[i] * b[i]), w, h, &k);
    let (ab, _, _) = filter_valid(&prod(&|i| a[i] * b[i]), w, h, &k);
    let n = (ow * oh) as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let c = (2.0 * cov + C2) / (va + vb + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        ssim += l * c;
        cs += c;
    }
    (ssim / n, cs / n)
}

fn channel(img: &RgbImage, c: usize) -> Vec<f64> {
    img.data().iter().map(|p| p[c]).collect()
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged
/// over valid window positions and then over channels.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, EvalError> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(EvalError::TooSmall);
    }
    Ok((0..3).map(|c| ssim_plane(&channel(a, c), &channel(b, c), w, h).0).sum::<f64>() / 3.0)
}

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn downsample2(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out[y * ow + x] = 0.25 * (plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]);
        }
    }
    (out, ow, oh)
}

/// Multi-scale SSIM with the canonical five level weights. Images too small
/// for five levels use as many as fit, with the weights renormalized.
pub fn ms_ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, EvalError> {
    check_dims(a, b)?;
    let (w0, h0) = (a.width(), a.height());
    let mut levels = 0;
    let (mut w, mut h) = (w0, h0);
    while levels < MS_SSIM_WEIGHTS.len() && w >= SSIM_WINDOW && h >= SSIM_WINDOW {
        levels += 1;
        w /= 2;
        h /= 2;
    }
    if levels == 0 {
        return Err(EvalError::TooSmall);
    }
    let weights = &MS_SSIM_WEIGHTS[..levels];
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for c in 0..3 {
        let (mut pa, mut pb) = (channel(a, c), channel(b, c));
        let (mut w, mut h) = (w0, h0);
        let mut value = 1.0;
        for (l, weight) in weights.iter().enumerate() {
            let (s, cs) = ssim_plane(&pa, &pb, w, h);
            let term = if l + 1 == levels { s } else { cs };
            value *= term.max(0.0).powf(weight / total);
            if l + 1 < levels {
                let (na, nw, nh) = downsample2(&pa, w, h);
                let (nb, _, _) = downsample2(&pb, w, h);
                pa = na;
                pb = nb;
                w = nw;
                h = nh;
            }
        }
        acc += value;
    }
    Ok(acc / 3.0)
}

/// Mean absolute depth difference over jointly valid pixels, meters.
pub fn depth_l1(a: &DepthMap, b: &DepthMap) -> Result<f64, EvalError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(EvalError::DimensionMismatch((a.width(), a.height()), (b.width(), b.height())));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.width() * a.height() {
        if let (Some(x), Some(y)) = (a.get_index(i), b.get_index(i)) {
            sum += (x - y).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::NoValidPixels);
    }
    Ok(sum / n as f64)
}

/// Named metric values, kept in sorted key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    values: std::collections::BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// One `name value` line per metric.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} {v:.6}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.values).expect("finite map serializes")
    }

    /// Trajectory metrics: ATE plus the association bookkeeping.
    pub fn trajectory(est: &Trajectory, gt: &Trajectory, with_scale: bool) -> Result<Self, EvalError> {
        let mut r = MetricReport::default();
        r.insert("est_poses", est.len() as f64);
        r.insert("gt_poses", gt.len() as f64);
        let ate = ate_rmse(est, gt, with_scale)?;
        r.insert("associated_pairs", ate.pairs as f64);
        r.insert("ate_rmse_cm", ate.rmse_cm);
        r.insert("degenerate", if ate.alignment.degenerate { 1.0 } else { 0.0 });
        if with_scale {
            r.insert("scale", ate.alignment.scale);
        }
        Ok(r)
    }
}
