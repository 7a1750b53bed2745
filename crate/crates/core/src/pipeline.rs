//! The online loop: per frame, obtain pseudo-depth, track, grow and refine
//! the map, and emit the frame's world-space point cloud.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{GeometryError, IoError};
use crate::eval::Trajectory;
use crate::exec::Exec;
use crate::flow::{FileFlow, FlowError, FlowNoise, FlowProvider, OracleFlow};
use crate::frame::Frame;
use crate::gaussian_map::{densify, init_from_depth, GaussianMap, MapSettings};
use crate::geometry::{backproject, Intrinsics, Pose};
use crate::image::{load_depth_png, DepthMap, RgbImage};
use crate::io::ply::PointCloud;
use crate::io::sequence::{read_sequence_spec, SequenceSpec, SCENE_FILE};
use crate::io::synthetic::{render_synthetic_with, SyntheticScene};
use crate::io::tum::{load_tum, TumSequence};
use crate::local_graph::{dump_graph, feedforward_track, inertia_extrapolate, TrackError, TrackerSettings};
use crate::optimizer::{mapping_step, track_iterative, KeyframeWindow, OptimError, OptimSettings};
use crate::renderer::render_with;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("depth provider: {0}")]
    Depth(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite pose at frame {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerKind {
    /// Flow-driven solve over the previous frame plus rendered views.
    #[default]
    #[serde(alias = "ff")]
    FeedForward,
    /// Flow-driven solve over the previous frame only.
    #[serde(alias = "ff-nolgr")]
    FeedForwardNoLgr,
    /// Render-and-backpropagate pose optimization.
    #[serde(alias = "iter")]
    Iterative,
}

impl std::str::FromStr for TrackerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ff" | "feed_forward" => Ok(TrackerKind::FeedForward),
            "ff-nolgr" | "feed_forward_no_lgr" => Ok(TrackerKind::FeedForwardNoLgr),
            "iter" | "iterative" => Ok(TrackerKind::Iterative),
            other => Err(format!("unknown tracker {other:?} (expected ff, ff-nolgr or iter)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cadence {
    pub densify_every: usize,
    pub map_every: usize,
}

impl Default for Cadence {
    fn default() -> Self {
        Self {
            densify_every: 1,
            map_every: 1,
        }
    }
}

/// Pseudo-depth corruption of the oracle provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthNoise {
    /// Std of the log of the multiplicative factor.
    pub sigma: f64,
    pub outlier_frac: f64,
    /// Outliers get a uniform additive offset in `±outlier_range` meters.
    pub outlier_range: f64,
}

impl Default for DepthNoise {
    fn default() -> Self {
        Self {
            sigma: 0.02,
            outlier_frac: 0.0,
            outlier_range: 0.5,
        }
    }
}

impl DepthNoise {
    pub fn exact() -> Self {
        Self {
            sigma: 0.0,
            outlier_frac: 0.0,
            outlier_range: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub depth: DepthNoise,
    pub flow: FlowNoise,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            depth: DepthNoise::default(),
            flow: FlowNoise::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tracker: TrackerKind,
    pub seed: u64,
    /// Weighted mean squared flow residual, px², above which a solve counts
    /// as diverged.
    pub divergence_threshold: f64,
    pub pointcloud_stride: usize,
    pub exec: Exec,
    pub cadence: Cadence,
    pub map: MapSettings,
    pub optim: OptimSettings,
    pub tracking: TrackerSettings,
    pub noise: NoiseConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerKind::FeedForward,
            seed: 0,
            divergence_threshold: 25.0,
            pointcloud_stride: 1,
            exec: Exec::default(),
            cadence: Cadence::default(),
            map: MapSettings::default(),
            optim: OptimSettings::default(),
            tracking: TrackerSettings::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable config")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.tracking.sampling.validate().map_err(PipelineError::Config)?;
        if self.cadence.densify_every == 0 || self.cadence.map_every == 0 {
            return Err(PipelineError::Config("cadence intervals must be positive".into()));
        }
        if self.optim.keyframe_every == 0 || self.optim.window_size == 0 {
            return Err(PipelineError::Config("keyframe interval and window size must be positive".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(PipelineError::Config("divergence threshold must be positive".into()));
        }
        Ok(())
    }

    /// Sub-settings with the shared seed and executor applied.
    fn resolved(&self) -> (OptimSettings, TrackerSettings) {
        let mut optim = self.optim;
        optim.exec = self.exec;
        let mut tracking = self.tracking;
        tracking.exec = self.exec;
        tracking.sampling.seed = self.seed;
        if self.tracker == TrackerKind::FeedForwardNoLgr {
            tracking.sampling.nodes = 1;
        }
        (optim, tracking)
    }
}

/// Source of per-frame pseudo-depth.
pub trait DepthProvider: Send + Sync {
    fn depth(&self, index: usize, rgb: &RgbImage) -> Result<DepthMap, PipelineError>;
}

/// Ground-truth depth from the analytic scene with multiplicative log-normal
/// noise and additive outliers.
pub struct OracleDepth {
    pub scene: SyntheticScene,
    /// Scene-frame camera poses.
    pub gt: Vec<Pose>,
    pub intrinsics: Intrinsics,
    pub noise: DepthNoise,
    pub seed: u64,
    pub exec: Exec,
}

impl DepthProvider for OracleDepth {
    fn depth(&self, index: usize, _rgb: &RgbImage) -> Result<DepthMap, PipelineError> {
        let pose = self
            .gt
            .get(index)
            .ok_or_else(|| PipelineError::Depth(format!("no ground-truth pose for frame {index}")))?;
        let (_, depth) = render_synthetic_with(&self.scene, pose, &self.intrinsics, self.exec);
        Ok(corrupt_depth(&depth, &self.noise, mix(self.seed, index as u64)))
    }
}

pub fn corrupt_depth(depth: &DepthMap, noise: &DepthNoise, seed: u64) -> DepthMap {
    if noise.sigma == 0.0 && noise.outlier_frac == 0.0 {
        return depth.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.sigma.max(0.0)).expect("finite sigma");
    DepthMap::from_fn(depth.width(), depth.height(), |x, y| {
        let d = depth.get(x, y)?;
        let mut v = d * normal.sample(&mut rng).exp();
        if noise.outlier_frac > 0.0 && rng.gen_bool(noise.outlier_frac.min(1.0)) {
            v += rng.gen_range(-1.0..=1.0) * noise.outlier_range;
        }
        (v > 0.0).then_some(v)
    })
}

/// Depth maps read from 16-bit PNGs: either the sequence's own `depth.txt`
/// entries or `{index:06}.png` files in a directory.
pub enum FileDepth {
    Sequence(TumSequence),
    Directory(PathBuf),
}

impl DepthProvider for FileDepth {
    fn depth(&self, index: usize, _rgb: &RgbImage) -> Result<DepthMap, PipelineError> {
        match self {
            FileDepth::Sequence(seq) => seq
                .load_depth(index)?
                .ok_or_else(|| PipelineError::Depth(format!("frame {index} has no depth file"))),
            FileDepth::Directory(dir) => {
                let path = dir.join(format!("{index:06}.png"));
                if !path.exists() {
                    return Err(IoError::Missing(path).into());
                }
                Ok(load_depth_png(&path)?)
            }
        }
    }
}

fn mix(seed: u64, index: u64) -> u64 {
    (seed ^ 0xD1B5_4A32_D192_ED03).wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

enum RgbSource {
    Synthetic { scene: SyntheticScene, poses: Vec<Pose> },
    Tum(TumSequence),
}

/// A frame stream with its depth and flow providers.
pub struct InputSource {
    rgb: RgbSource,
    timestamps: Vec<f64>,
    pub intrinsics: Intrinsics,
    pub depth: Box<dyn DepthProvider>,
    pub flow: Box<dyn FlowProvider>,
    /// Ground truth in its own world frame, one entry per frame where known.
    pub groundtruth: Option<Trajectory>,
}

impl InputSource {
    /// Renders frames of `spec` on the fly with oracle depth and flow.
    pub fn synthetic(spec: &SequenceSpec, noise: &NoiseConfig, seed: u64, exec: Exec) -> Self {
        let scene = spec.build_scene();
        let poses = spec.poses();
        let k = spec.intrinsics;
        let mut flow = OracleFlow::new(scene.clone(), poses.clone(), k, noise.flow, mix(seed, u64::MAX));
        if let Some(p0) = poses.first() {
            flow.anchor = *p0;
        }
        let depth = OracleDepth {
            scene: scene.clone(),
            gt: poses.clone(),
            intrinsics: k,
            noise: noise.depth,
            seed,
            exec,
        };
        Self {
            timestamps: (0..poses.len()).map(|i| spec.timestamp(i)).collect(),
            groundtruth: Some(spec.groundtruth()),
            rgb: RgbSource::Synthetic { scene, poses },
            intrinsics: k,
            depth: Box::new(depth),
            flow: Box::new(flow),
        }
    }

    /// A TUM-layout directory. Depth comes from `depth_dir` when given, else
    /// from the sequence's depth files. Flow comes from `flow_dir` when given;
    /// otherwise a `scene.json` next to the data enables the oracle.
    pub fn tum(
        dir: &Path,
        depth_dir: Option<&Path>,
        flow_dir: Option<&Path>,
        noise: &NoiseConfig,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        let seq = load_tum(dir)?;
        let k = seq.intrinsics;
        let flow: Box<dyn FlowProvider> = match flow_dir {
            Some(d) => Box::new(FileFlow { dir: d.to_path_buf() }),
            None => {
                let scene_path = dir.join(SCENE_FILE);
                if !scene_path.exists() {
                    return Err(PipelineError::Config(format!(
                        "{} has no {SCENE_FILE}; a flow directory is required",
                        dir.display()
                    )));
                }
                let spec = read_sequence_spec(&scene_path)?;
                let poses = spec.poses();
                let mut flow =
                    OracleFlow::new(spec.build_scene(), poses.clone(), k, noise.flow, mix(seed, u64::MAX));
                flow.anchor = poses.first().copied().unwrap_or_else(Pose::identity);
                Box::new(flow)
            }
        };
        let depth: Box<dyn DepthProvider> = match depth_dir {
            Some(d) => Box::new(FileDepth::Directory(d.to_path_buf())),
            None => Box::new(FileDepth::Sequence(seq.clone())),
        };
        let groundtruth = seq.groundtruth.clone();
        Ok(Self {
            timestamps: seq.frames.iter().map(|f| f.timestamp).collect(),
            rgb: RgbSource::Tum(seq),
            intrinsics: k,
            depth,
            flow,
            groundtruth,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Keeps the first `n` frames.
    pub fn truncate(&mut self, n: usize) {
        self.timestamps.truncate(n);
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        self.timestamps[i]
    }

    pub fn rgb(&self, i: usize, exec: Exec) -> Result<RgbImage, PipelineError> {
        match &self.rgb {
            RgbSource::Synthetic { scene, poses } => Ok(render_synthetic_with(scene, &poses[i], &self.intrinsics, exec).0),
            RgbSource::Tum(seq) => Ok(seq.load_rgb(i)?),
        }
    }
}

/// World-frame backprojection of the valid strided depth pixels.
pub fn emit_pointcloud(frame: &Frame, pose: &Pose, stride: usize) -> PointCloud {
    let stride = stride.max(1);
    let k = &frame.intrinsics;
    let mut cloud = PointCloud::default();
    for y in (0..k.height).step_by(stride) {
        for x in (0..k.width).step_by(stride) {
            let Some(d) = frame.depth.get(x, y) else { continue };
            if let Ok(p) = backproject(&Vector2::new(x as f64, y as f64), d, k) {
                cloud.push(pose.transform_point(&p), *frame.rgb.get(x, y));
            }
        }
    }
    cloud
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameTiming {
    pub track_s: f64,
    pub map_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub frame: usize,
    /// The tracker failed or diverged and the pose is the inertia prediction.
    pub diverged: bool,
    pub reason: Option<String>,
    /// Final weighted mean flow residual (feed-forward) or photometric loss
    /// (iterative).
    pub track_residual: f64,
    pub track_iterations: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub added_gaussians: usize,
    pub map_size: usize,
    pub map_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub pose: Pose,
    pub cloud: PointCloud,
    pub diagnostics: Diagnostics,
}

/// Everything the loop carries from frame to frame.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub map: GaussianMap,
    pub trajectory: Vec<(f64, Pose)>,
    pub window: KeyframeWindow,
    pub timings: Vec<FrameTiming>,
    /// The last two frames with their poses, oldest first.
    history: Vec<(Arc<Frame>, Pose)>,
}

impl PipelineState {
    pub fn new(window_size: usize) -> Self {
        Self {
            map: GaussianMap::new(),
            trajectory: Vec::new(),
            window: KeyframeWindow::new(window_size),
            timings: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn frames_processed(&self) -> usize {
        self.trajectory.len()
    }
}

pub struct Pipeline<'a> {
    config: PipelineConfig,
    optim: OptimSettings,
    tracking: TrackerSettings,
    intrinsics: Intrinsics,
    depth: &'a dyn DepthProvider,
    flow: &'a dyn FlowProvider,
    graph_dump: Option<PathBuf>,
    pub state: PipelineState,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: PipelineConfig,
        intrinsics: Intrinsics,
        depth: &'a dyn DepthProvider,
        flow: &'a dyn FlowProvider,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        intrinsics.validate()?;
        let (optim, tracking) = config.resolved();
        Ok(Self {
            state: PipelineState::new(optim.window_size),
            config,
            optim,
            tracking,
            intrinsics,
            depth,
            flow,
            graph_dump: None,
        })
    }

    /// Writes each frame's local graph under `dir/frame_XXXXXX`.
    pub fn set_graph_dump(&mut self, dir: Option<PathBuf>) {
        self.graph_dump = dir;
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Processes the next frame.
    pub fn step(&mut self, rgb: RgbImage, timestamp: f64) -> Result<StepOutput, PipelineError> {
        let index = self.state.frames_processed();
        let depth = self.depth.depth(index, &rgb)?;
        let frame = Arc::new(Frame::new(index, timestamp, rgb, depth, self.intrinsics)?);
        let mut diag = Diagnostics {
            frame: index,
            ..Default::default()
        };

        let clock = Instant::now();
        let pose = if index == 0 {
            Pose::identity()
        } else {
            self.track(&frame, &mut diag)?
        };
        if !pose.is_finite() {
            return Err(PipelineError::NonFinite(index));
        }
        let track_s = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        self.update_map(&frame, &pose, &mut diag)?;
        let map_s = clock.elapsed().as_secs_f64();

        let cloud = emit_pointcloud(&frame, &pose, self.config.pointcloud_stride);
        let state = &mut self.state;
        state.trajectory.push((timestamp, pose));
        state.timings.push(FrameTiming { track_s, map_s });
        state.history.push((frame, pose));
        if state.history.len() > 2 {
            state.history.remove(0);
        }
        diag.map_size = state.map.len();
        Ok(StepOutput {
            pose,
            cloud,
            diagnostics: diag,
        })
    }

    fn track(&self, frame: &Frame, diag: &mut Diagnostics) -> Result<Pose, PipelineError> {
        let history: Vec<(&Frame, Pose)> = self.state.history.iter().map(|(f, p)| (f.as_ref(), *p)).collect();
        let (prev, prev2) = match history.as_slice() {
            [.., a, b] => (b.1, a.1),
            [b] => (b.1, b.1),
            [] => unreachable!("frame 0 is not tracked"),
        };
        let fallback = inertia_extrapolate(&prev, &prev2);
        let mut diverge = |reason: String| {
            diag.diverged = true;
            diag.reason = Some(reason);
            fallback
        };
        match self.config.tracker {
            TrackerKind::FeedForward | TrackerKind::FeedForwardNoLgr => {
                let keep = self.graph_dump.is_some();
                match feedforward_track(&self.state.map, &history, frame, self.flow, &self.tracking, keep) {
                    Ok(r) => {
                        if let (Some(dir), Some(nodes)) = (&self.graph_dump, &r.graph) {
                            dump_graph(nodes, &dir.join(format!("frame_{:06}", frame.index)))?;
                        }
                        let residual = r.solution.mean_residual();
                        diag.track_residual = residual;
                        diag.track_iterations = r.solution.iterations;
                        diag.graph_nodes = r.nodes;
                        diag.graph_edges = r.edges;
                        if residual.is_finite() && residual <= self.config.divergence_threshold && r.pose.is_finite() {
                            Ok(r.pose)
                        } else {
                            Ok(diverge(format!("residual {residual:.3} px²")))
                        }
                    }
                    Err(TrackError::Flow(e @ (FlowError::Io(_) | FlowError::MissingGroundTruth(_)))) => Err(e.into()),
                    Err(e) => Ok(diverge(e.to_string())),
                }
            }
            TrackerKind::Iterative => match track_iterative(&self.state.map, frame, &fallback, &self.optim) {
                Ok(r) if r.pose.is_finite() && r.loss.is_finite() => {
                    diag.track_residual = r.loss;
                    diag.track_iterations = r.iterations;
                    Ok(r.pose)
                }
                Ok(_) => Ok(diverge("non-finite iterative solution".into())),
                Err(e) => Ok(diverge(e.to_string())),
            },
        }
    }

    fn update_map(&mut self, frame: &Arc<Frame>, pose: &Pose, diag: &mut Diagnostics) -> Result<(), PipelineError> {
        let index = frame.index;
        let cfg = &self.config;
        let state = &mut self.state;
        let k = &self.intrinsics;
        if state.map.is_empty() {
            let gs = init_from_depth(&frame.rgb, &frame.depth, pose, k, None, &cfg.map);
            diag.added_gaussians = gs.len();
            state.map.extend(gs, index as u32);
        } else if index % cfg.cadence.densify_every == 0 {
            let out = render_with(&state.map, pose, k, cfg.exec);
            diag.added_gaussians = densify(
                &mut state.map,
                &frame.rgb,
                &frame.depth,
                pose,
                k,
                &out.silhouette,
                &out.depth,
                index as u32,
                &cfg.map,
            );
        }
        if index % cfg.cadence.map_every == 0 && !state.map.is_empty() {
            let window = state.window.with_current(frame.clone(), *pose);
            let report = mapping_step(&mut state.map, &window, &self.optim, &cfg.map)?;
            diag.map_loss = Some(report.final_loss);
            state.map.prune(&cfg.map);
        }
        if index % self.optim.keyframe_every == 0 {
            state.window.push(frame.clone(), *pose);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trajectory: Trajectory,
    pub timings: Vec<FrameTiming>,
    pub map: GaussianMap,
    pub diagnostics: Vec<Diagnostics>,
    /// Per-frame clouds, kept only when requested.
    pub clouds: Vec<PointCloud>,
}

impl RunReport {
    pub fn diverged_frames(&self) -> Vec<usize> {
        self.diagnostics.iter().filter(|d| d.diverged).map(|d| d.frame).collect()
    }

    pub fn mean_track_s(&self) -> f64 {
        mean(self.timings.iter().skip(1).map(|t| t.track_s))
    }

    pub fn mean_map_s(&self) -> f64 {
        mean(self.timings.iter().map(|t| t.map_s))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Streams every frame of `input` through a fresh pipeline.
pub fn run(config: &PipelineConfig, input: &InputSource, keep_clouds: bool) -> Result<RunReport, PipelineError> {
    run_with(config, input, keep_clouds, None, |_, _| {})
}

/// [`run`] with a per-frame callback.
pub fn run_with(
    config: &PipelineConfig,
    input: &InputSource,
    keep_clouds: bool,
    graph_dump: Option<&Path>,
    mut on_frame: impl FnMut(usize, &StepOutput),
) -> Result<RunReport, PipelineError> {
    let mut pipe = Pipeline::new(*config, input.intrinsics, input.depth.as_ref(), input.flow.as_ref())?;
    pipe.set_graph_dump(graph_dump.map(Path::to_path_buf));
    let mut diagnostics = Vec::with_capacity(input.len());
    let mut clouds = Vec::new();
    for i in 0..input.len() {
        let rgb = input.rgb(i, config.exec)?;
        let out = pipe.step(rgb, input.timestamp(i))?;
        log::debug!(
            "frame {i}: map {} gaussians, diverged {}",
            out.diagnostics.map_size,
            out.diagnostics.diverged
        );
        on_frame(i, &out);
        diagnostics.push(out.diagnostics);
        if keep_clouds {
            clouds.push(out.cloud);
        }
    }
    let state = pipe.state;
    Ok(RunReport {
        trajectory: Trajectory::new(state.trajectory).map_err(|e| PipelineError::Config(e.to_string()))?,
        timings: state.timings,
        map: state.map,
        diagnostics,
        clouds,
    })
}

/// Mean PSNR and SSIM of map renders at the estimated poses against the
/// input images, over every `every`-th frame.
pub fn render_quality(
    report: &RunReport,
    input: &InputSource,
    every: usize,
    exec: Exec,
) -> Result<(f64, f64), PipelineError> {
    let (mut psnr, mut ssim, mut n) = (0.0, 0.0, 0usize);
    for (i, (_, pose)) in report.trajectory.entries().iter().enumerate().step_by(every.max(1)) {
        let target = input.rgb(i, exec)?;
        let out = render_with(&report.map, pose, &input.intrinsics, exec);
        let bad = |e: crate::eval::EvalError| PipelineError::Config(e.to_string());
        psnr += crate::eval::psnr(&out.color, &target).map_err(bad)?;
        ssim += crate::eval::ssim(&out.color, &target).map_err(bad)?;
        n += 1;
    }
    if n == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    Ok((psnr / n as f64, ssim / n as f64))
}
