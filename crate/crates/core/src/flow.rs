//! Dense correspondence corrections and confidences from pluggable providers.

use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::IoError;
use crate::geometry::{project, Intrinsics, PixelField, Pose, MIN_DEPTH};
use crate::image::RgbImage;
use crate::io::synthetic::{SyntheticScene, OCCLUSION_TOLERANCE};

pub const FLOW_MAGIC: &[u8; 4] = b"GFLW";
/// Half-width of the uniform outlier corrections, full-resolution pixels.
pub const OUTLIER_RANGE: f64 = 20.0;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("no ground truth for frame {0}")]
    MissingGroundTruth(usize),
    #[error("flow unavailable for {0}")]
    Unavailable(String),
    #[error("invalid resolution divisor {0}")]
    InvalidDivisor(usize),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Per-pixel corrections `r` and two-channel confidences `w` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub corrections: Vec<Vector2<f64>>,
    pub confidence: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            corrections: vec![Vector2::zeros(); n],
            confidence: vec![[0.0; 2]; n],
            valid: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Confidences non-negative and finite; corrections finite where valid.
    pub fn is_consistent(&self) -> bool {
        let n = self.width * self.height;
        self.corrections.len() == n
            && self.confidence.len() == n
            && self.valid.len() == n
            && self.confidence.iter().flatten().all(|w| w.is_finite() && *w >= 0.0)
            && self
                .corrections
                .iter()
                .zip(&self.valid)
                .all(|(c, v)| !v || (c.x.is_finite() && c.y.is_finite()))
    }
}

/// Which view a correspondence field starts from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeSource {
    /// A real input frame by index.
    Frame(usize),
    /// A map render at the given pose.
    Rendered(Pose),
}

#[derive(Debug, Clone)]
pub struct FlowRequest<'a> {
    pub source: NodeSource,
    pub target: usize,
    pub source_image: Option<&'a RgbImage>,
    pub target_image: Option<&'a RgbImage>,
    /// Prior correspondences on the coarse grid.
    pub prior: &'a PixelField,
    pub divisor: usize,
    /// Position of the edge within its graph; decorrelates noise across edges.
    pub edge: usize,
}

impl FlowRequest<'_> {
    pub fn validate(&self) -> Result<(), FlowError> {
        if matches!(self.divisor, 1 | 2 | 4 | 8) {
            Ok(())
        } else {
            Err(FlowError::InvalidDivisor(self.divisor))
        }
    }
}

pub trait FlowProvider: Send + Sync {
    fn flow(&self, req: &FlowRequest) -> Result<FlowField, FlowError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowNoise {
    /// Gaussian noise std, full-resolution pixels.
    pub sigma_px: f64,
    pub outlier_frac: f64,
    /// Confidence given to outliers: 1 for the stress case, small for the benign one.
    pub outlier_confidence: f64,
}

impl Default for FlowNoise {
    fn default() -> Self {
        Self {
            sigma_px: 0.5,
            outlier_frac: 0.0,
            outlier_confidence: 1.0,
        }
    }
}

impl FlowNoise {
    pub fn exact() -> Self {
        Self {
            sigma_px: 0.0,
            outlier_frac: 0.0,
            outlier_confidence: 1.0,
        }
    }
}

/// Ground-truth correspondences for the request, with noise. `source_pose`
/// places the source view and `target_pose` the target view in the scene;
/// `k_full` is the full-resolution camera.
pub fn oracle_flow(
    req: &FlowRequest,
    scene: &SyntheticScene,
    source_pose: &Pose,
    target_pose: &Pose,
    k_full: &Intrinsics,
    noise: &FlowNoise,
    seed: u64,
) -> Result<FlowField, FlowError> {
    req.validate()?;
    let d = req.divisor;
    let k = k_full.coarse(d);
    if req.prior.dims() != k.dims() {
        return Err(FlowError::DimensionMismatch {
            expected: k.dims(),
            actual: req.prior.dims(),
        });
    }
    let (w, h) = k.dims();
    let mut out = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !req.prior.valid[i] {
                continue;
            }
            let Some(hit) = scene.cast_pixel(source_pose, &k, &Vector2::new(x as f64, y as f64)) else {
                continue;
            };
            let xt = target_pose.inverse_transform_point(&hit.point);
            if xt.z <= MIN_DEPTH {
                continue;
            }
            let Ok(q) = project(&xt, &k) else { continue };
            let visible = k.contains(&q)
                && scene
                    .cast_pixel(target_pose, &k, &q)
                    .is_some_and(|t| (t.t - xt.z).abs() <= OCCLUSION_TOLERANCE * xt.z);
            out.corrections[i] = q - req.prior.coords[i];
            out.valid[i] = true;
            let c = if visible { 1.0 } else { 0.0 };
            out.confidence[i] = [c, c];
        }
    }

    if noise.sigma_px > 0.0 || noise.outlier_frac > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, req.target, req.edge));
        let sigma = noise.sigma_px / d as f64;
        let range = OUTLIER_RANGE / d as f64;
        let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        for i in 0..out.len() {
            if !out.valid[i] {
                continue;
            }
            // Draw a fixed number of variates per pixel so streams stay aligned.
            let nx = normal.sample(&mut rng);
            let ny = normal.sample(&mut rng);
            let u: f64 = rng.gen();
            let ox = rng.gen_range(-range..=range);
            let oy = rng.gen_range(-range..=range);
            if u < noise.outlier_frac {
                out.corrections[i] = Vector2::new(ox, oy);
                out.confidence[i] = [noise.outlier_confidence; 2];
            } else {
                out.corrections[i] += Vector2::new(nx, ny);
            }
        }
    }
    Ok(out)
}

fn noise_seed(seed: u64, target: usize, edge: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (target as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ (edge as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7)
}

/// Oracle provider over a synthetic scene and its ground-truth trajectory.
/// Rendered sources are ray-cast from their own pose, mapped into the scene
/// frame by `anchor` (the scene pose of the estimate's world origin).
#[derive(Debug, Clone)]
pub struct OracleFlow {
    pub scene: SyntheticScene,
    pub gt: Vec<Pose>,
    pub intrinsics: Intrinsics,
    pub noise: FlowNoise,
    pub seed: u64,
    pub anchor: Pose,
}

impl OracleFlow {
    pub fn new(scene: SyntheticScene, gt: Vec<Pose>, intrinsics: Intrinsics, noise: FlowNoise, seed: u64) -> Self {
        Self {
            scene,
            gt,
            intrinsics,
            noise,
            seed,
            anchor: Pose::identity(),
        }
    }
}

impl FlowProvider for OracleFlow {
    fn flow(&self, req: &FlowRequest) -> Result<FlowField, FlowError> {
        let gt = |i: usize| self.gt.get(i).copied().ok_or(FlowError::MissingGroundTruth(i));
        let source = match req.source {
            NodeSource::Frame(i) => gt(i)?,
            NodeSource::Rendered(p) => self.anchor.compose(&p),
        };
        let target = gt(req.target)?;
        oracle_flow(req, &self.scene, &source, &target, &self.intrinsics, &self.noise, self.seed)
    }
}

/// Precomputed fields under `dir`, one file per frame pair named by
/// [`pair_key`]. Rendered sources have no files.
#[derive(Debug, Clone)]
pub struct FileFlow {
    pub dir: PathBuf,
}

pub fn pair_key(source: usize, target: usize) -> String {
    format!("{source:06}_{target:06}.flow")
}

impl FlowProvider for FileFlow {
    fn flow(&self, req: &FlowRequest) -> Result<FlowField, FlowError> {
        req.validate()?;
        let NodeSource::Frame(src) = req.source else {
            return Err(FlowError::Unavailable("rendered source".into()));
        };
        let path = self.dir.join(pair_key(src, req.target));
        if !path.exists() {
            return Err(FlowError::Unavailable(path.display().to_string()));
        }
        let field = load_flow(&path)?;
        if field.dims() != req.prior.dims() {
            return Err(FlowError::DimensionMismatch {
                expected: req.prior.dims(),
                actual: field.dims(),
            });
        }
        Ok(field)
    }
}

pub fn encode_flow(field: &FlowField) -> Vec<u8> {
    let n = field.len();
    let mut out = Vec::with_capacity(12 + n * 17);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(field.width as u32).to_le_bytes());
    out.extend_from_slice(&(field.height as u32).to_le_bytes());
    for c in &field.corrections {
        out.extend_from_slice(&(c.x as f32).to_le_bytes());
        out.extend_from_slice(&(c.y as f32).to_le_bytes());
    }
    for w in &field.confidence {
        out.extend_from_slice(&(w[0] as f32).to_le_bytes());
        out.extend_from_slice(&(w[1] as f32).to_le_bytes());
    }
    out.extend(field.valid.iter().map(|&v| v as u8));
    out
}

pub fn decode_flow(bytes: &[u8], path: &Path) -> Result<FlowField, IoError> {
    let err = |m: &str| IoError::format(path, m);
    if bytes.len() < 12 || &bytes[..4] != FLOW_MAGIC {
        return Err(err("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (w, h) = (u32_at(4), u32_at(8));
    let n = w.checked_mul(h).ok_or_else(|| err("dimensions overflow"))?;
    let expected = n
        .checked_mul(17)
        .and_then(|v| v.checked_add(12))
        .ok_or_else(|| err("dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(err(&format!("expected {expected} bytes for {w}x{h}, found {}", bytes.len())));
    }
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as f64;
    let corr_base = 12;
    let conf_base = corr_base + 8 * n;
    let mask_base = conf_base + 8 * n;
    let mut field = FlowField::zeros(w, h);
    for i in 0..n {
        field.corrections[i] = Vector2::new(f32_at(corr_base + 8 * i), f32_at(corr_base + 8 * i + 4));
        field.confidence[i] = [f32_at(conf_base + 8 * i), f32_at(conf_base + 8 * i + 4)];
        field.valid[i] = match bytes[mask_base + i] {
            0 => false,
            1 => true,
            _ => return Err(err("mask byte not 0/1")),
        };
    }
    if !field.is_consistent() {
        return Err(err("non-finite or negative values"));
    }
    Ok(field)
}

pub fn save_flow(field: &FlowField, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, encode_flow(field)).map_err(|e| IoError::io(path, e))
}

pub fn load_flow(path: &Path) -> Result<FlowField, IoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| IoError::io(path, e))?;
    decode_flow(&bytes, path)
}

/// `p* = p + r` where both are valid.
pub fn corrected_correspondence(prior: &PixelField, flow: &FlowField) -> Result<PixelField, FlowError> {
    if prior.dims() != flow.dims() {
        return Err(FlowError::DimensionMismatch {
            expected: prior.dims(),
            actual: flow.dims(),
        });
    }
    let (w, h) = prior.dims();
    let mut out = PixelField::empty(w, h);
    let bounds = Intrinsics {
        fx: 1.0,
        fy: 1.0,
        cx: 0.0,
        cy: 0.0,
        width: w,
        height: h,
    };
    for i in 0..prior.len() {
        if prior.valid[i] && flow.valid[i] {
            let p = prior.coords[i] + flow.corrections[i];
            out.coords[i] = p;
            out.valid[i] = true;
            out.in_bounds[i] = bounds.contains(&p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{correspondence_field, Tangent};
    use crate::io::synthetic::{render_synthetic, SceneSpec};
    use nalgebra::Vector3;

    fn setup() -> (SyntheticScene, Intrinsics, Pose, Pose) {
        let scene = SyntheticScene::new(SceneSpec::default());
        let k = Intrinsics::new(120.0, 120.0, 79.5, 59.5, 160, 120).unwrap();
        let a = Pose::look_at(Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.3, 0.1, 2.5), -Vector3::y());
        let b = a.retract(&Tangent::new(Vector3::new(0.01, -0.02, 0.005), Vector3::new(0.05, 0.01, 0.02)));
        (scene, k, a, b)
    }

    fn gt_prior(scene: &SyntheticScene, k: &Intrinsics, src: &Pose, dst: &Pose, divisor: usize) -> PixelField {
        let kc = k.coarse(divisor);
        let (_, depth) = render_synthetic(scene, src, &kc);
        correspondence_field(&depth, src, dst, &kc).unwrap()
    }

    fn request<'a>(prior: &'a PixelField, divisor: usize) -> FlowRequest<'a> {
        FlowRequest {
            source: NodeSource::Frame(0),
            target: 1,
            source_image: None,
            target_image: None,
            prior,
            divisor,
            edge: 0,
        }
    }

    #[test]
    fn exact_oracle_on_gt_prior_is_zero() {
        let (scene, k, a, b) = setup();
        let prior = gt_prior(&scene, &k, &a, &b, 4);
        let f = oracle_flow(&request(&prior, 4), &scene, &a, &b, &k, &FlowNoise::exact(), 0).unwrap();
        let mut covisible = 0;
        for i in 0..f.len() {
            if f.valid[i] {
                assert!(f.corrections[i].norm() < 1e-9);
                if f.confidence[i][0] == 1.0 {
                    covisible += 1;
                }
            }
        }
        assert!(covisible > f.len() / 2);
        assert!(f.is_consistent());
    }

    #[test]
    fn perturbed_prior_is_corrected_exactly() {
        let (scene, k, a, b) = setup();
        let wrong = b.retract(&Tangent::new(Vector3::new(0.0, 0.02, 0.0), Vector3::new(0.03, 0.0, 0.0)));
        let prior = gt_prior(&scene, &k, &a, &wrong, 4);
        let truth = gt_prior(&scene, &k, &a, &b, 4);
        let f = oracle_flow(&request(&prior, 4), &scene, &a, &b, &k, &FlowNoise::exact(), 0).unwrap();
        let fixed = corrected_correspondence(&prior, &f).unwrap();
        for i in 0..f.len() {
            if f.valid[i] && f.confidence[i][0] > 0.0 {
                assert!((fixed.coords[i] - truth.coords[i]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn confidence_zero_when_out_of_view_or_occluded() {
        let (scene, k, a, _) = setup();
        // Large sideways step so much of the source falls out of view.
        let b = a.retract(&Tangent::new(Vector3::new(0.0, 0.4, 0.0), Vector3::new(0.8, 0.0, 0.0)));
        let prior = gt_prior(&scene, &k, &a, &b, 2);
        let f = oracle_flow(&request(&prior, 2), &scene, &a, &b, &k, &FlowNoise::exact(), 0).unwrap();
        let kc = k.coarse(2);
        let (_, depth_a) = render_synthetic(&scene, &a, &kc);
        let (_, zbuf) = render_synthetic(&scene, &b, &kc);
        let (mut outside, mut occluded, mut visible) = (0, 0, 0);
        for i in 0..f.len() {
            if !f.valid[i] {
                continue;
            }
            let q = prior.coords[i] + f.corrections[i];
            if !kc.contains(&q) {
                assert_eq!(f.confidence[i], [0.0, 0.0]);
                outside += 1;
                continue;
            }
            let p = Vector2::new((i % kc.width) as f64, (i / kc.width) as f64);
            let xa = crate::geometry::backproject(&p, depth_a.get_index(i).unwrap(), &kc).unwrap();
            let zb = b.inverse_transform_point(&a.transform_point(&xa)).z;
            // Z-buffer neighborhood around the landing pixel; only decide
            // where all neighbors agree.
            let (cx, cy) = (q.x.floor() as i64, q.y.floor() as i64);
            let mut near = Vec::new();
            for dy in 0..=1 {
                for dx in 0..=1 {
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && y >= 0 && (x as usize) < kc.width && (y as usize) < kc.height {
                        near.push(zbuf.get(x as usize, y as usize).unwrap());
                    }
                }
            }
            if near.iter().all(|z| *z < 0.9 * zb) {
                assert_eq!(f.confidence[i], [0.0, 0.0], "occluded pixel {i}");
                occluded += 1;
            } else if near.iter().all(|z| (z - zb).abs() < 0.03 * zb) {
                assert_eq!(f.confidence[i], [1.0, 1.0], "visible pixel {i}");
                visible += 1;
            }
        }
        assert!(outside > 100 && visible > 100, "{outside} {occluded} {visible}");
    }

    #[test]
    fn noise_std_matches_sigma() {
        let (scene, k, a, b) = setup();
        let prior = gt_prior(&scene, &k, &a, &b, 1);
        let noise = FlowNoise {
            sigma_px: 0.5,
            outlier_frac: 0.0,
            outlier_confidence: 1.0,
        };
        let f = oracle_flow(&request(&prior, 1), &scene, &a, &b, &k, &noise, 7).unwrap();
        let vals: Vec<f64> = (0..f.len())
            .filter(|&i| f.valid[i])
            .flat_map(|i| [f.corrections[i].x, f.corrections[i].y])
            .collect();
        assert!(vals.len() > 10_000);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.025, "std {}", var.sqrt());
    }

    #[test]
    fn outliers_follow_fraction_and_confidence() {
        let (scene, k, a, b) = setup();
        let prior = gt_prior(&scene, &k, &a, &b, 1);
        let noise = FlowNoise {
            sigma_px: 0.0,
            outlier_frac: 0.1,
            outlier_confidence: 0.05,
        };
        let f = oracle_flow(&request(&prior, 1), &scene, &a, &b, &k, &noise, 3).unwrap();
        let valid = f.valid.iter().filter(|v| **v).count();
        let outliers = (0..f.len())
            .filter(|&i| f.valid[i] && f.confidence[i][0] == 0.05)
            .count();
        let frac = outliers as f64 / valid as f64;
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
    }

    #[test]
    fn noise_is_seeded() {
        let (scene, k, a, b) = setup();
        let prior = gt_prior(&scene, &k, &a, &b, 8);
        let r = request(&prior, 8);
        let f1 = oracle_flow(&r, &scene, &a, &b, &k, &FlowNoise::default(), 5).unwrap();
        let f2 = oracle_flow(&r, &scene, &a, &b, &k, &FlowNoise::default(), 5).unwrap();
        let f3 = oracle_flow(&r, &scene, &a, &b, &k, &FlowNoise::default(), 6).unwrap();
        assert_eq!(f1, f2);
        assert_ne!(f1, f3);
    }

    #[test]
    fn invalid_divisor_rejected() {
        let prior = PixelField::identity(4, 4);
        let r = request(&prior, 3);
        assert!(matches!(r.validate(), Err(FlowError::InvalidDivisor(3))));
    }

    fn random_field(w: usize, h: usize, seed: u64) -> FlowField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = FlowField::zeros(w, h);
        for i in 0..w * h {
            f.corrections[i] = Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            f.confidence[i] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            f.valid[i] = rng.gen_bool(0.8);
        }
        f
    }

    #[test]
    fn file_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(pair_key(1, 2));
        // Values representable in f32 survive exactly.
        let mut f = random_field(7, 5, 1);
        for c in &mut f.corrections {
            *c = c.map(|v| v as f32 as f64);
        }
        for w in &mut f.confidence {
            *w = w.map(|v| v as f32 as f64);
        }
        save_flow(&f, &path).unwrap();
        let g = load_flow(&path).unwrap();
        assert_eq!(f, g);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"GFLW");
        assert_eq!(bytes.len(), 12 + 35 * 17);
        assert_eq!(encode_flow(&g), bytes);
    }

    #[test]
    fn truncated_and_bad_magic_fail() {
        let f = random_field(3, 3, 2);
        let bytes = encode_flow(&f);
        let p = Path::new("x.flow");
        assert!(matches!(decode_flow(&bytes[..bytes.len() - 1], p), Err(IoError::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_flow(&bad, p), Err(IoError::Format { .. })));
        assert!(decode_flow(&bytes[..6], p).is_err());
    }

    #[test]
    fn file_provider_checks_dimensions_and_rendered_sources() {
        let dir = tempfile::tempdir().unwrap();
        save_flow(&random_field(4, 3, 3), &dir.path().join(pair_key(0, 1))).unwrap();
        let provider = FileFlow {
            dir: dir.path().to_path_buf(),
        };
        let good = PixelField::identity(4, 3);
        assert!(provider.flow(&request(&good, 8)).is_ok());
        let bad = PixelField::identity(5, 3);
        assert!(matches!(
            provider.flow(&request(&bad, 8)),
            Err(FlowError::DimensionMismatch { .. })
        ));
        let mut r = request(&good, 8);
        r.source = NodeSource::Rendered(Pose::identity());
        assert!(matches!(provider.flow(&r), Err(FlowError::Unavailable(_))));
        r.source = NodeSource::Frame(5);
        assert!(matches!(provider.flow(&r), Err(FlowError::Unavailable(_))));
    }

    #[test]
    fn corrected_correspondence_cases() {
        let prior = PixelField::identity(6, 4);
        let mut zero = FlowField::zeros(6, 4);
        zero.valid.iter_mut().for_each(|v| *v = true);
        assert_eq!(corrected_correspondence(&prior, &zero).unwrap(), prior);
        let none = FlowField::zeros(6, 4);
        assert_eq!(corrected_correspondence(&prior, &none).unwrap().valid_count(), 0);
        assert!(corrected_correspondence(&prior, &FlowField::zeros(5, 4)).is_err());
    }

    #[test]
    fn corrected_correspondence_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut prior = PixelField::empty(9, 7);
        for i in 0..prior.len() {
            prior.coords[i] = Vector2::new(rng.gen_range(-2.0..11.0), rng.gen_range(-2.0..9.0));
            prior.valid[i] = rng.gen_bool(0.7);
        }
        let flow = random_field(9, 7, 12);
        let out = corrected_correspondence(&prior, &flow).unwrap();
        for i in 0..prior.len() {
            let both = prior.valid[i] && flow.valid[i];
            assert_eq!(out.valid[i], both);
            if both {
                let e = prior.coords[i] + flow.corrections[i];
                assert!((out.coords[i] - e).norm() <= 1e-12);
                let inside = e.x >= 0.0 && e.y >= 0.0 && e.x < 9.0 && e.y < 7.0;
                assert_eq!(out.in_bounds[i], inside);
            }
        }
    }
}
