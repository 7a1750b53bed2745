//! Monte-Carlo tracking benchmark: single-frame feed-forward tracking on
//! seeded synthetic segments, compared across local-graph sizes.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::flow::{FlowNoise, OracleFlow};
use crate::frame::Frame;
use crate::gaussian_map::{init_from_depth, GaussianMap, MapSettings};
use crate::geometry::Pose;
use crate::io::synthetic::{desk_intrinsics, render_synthetic_with, SceneSpec, SyntheticScene};
use crate::local_graph::{feedforward_track, TrackError, TrackerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LgrBenchmark {
    pub trials: usize,
    pub seed: u64,
    pub flow: FlowNoise,
    pub tracker: TrackerSettings,
    pub map: MapSettings,
    /// Per-frame camera translation range, meters.
    pub min_step: f64,
    pub max_step: f64,
    /// Per-frame rotation bound, degrees.
    pub max_turn_deg: f64,
    /// Acceleration bound relative to the step, so the inertia prediction
    /// is off by up to `accel·step` at the target frame.
    pub accel: f64,
}

impl Default for LgrBenchmark {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0,
            flow: FlowNoise {
                sigma_px: 0.5,
                outlier_frac: 0.1,
                outlier_confidence: 1.0,
            },
            tracker: TrackerSettings::default(),
            map: MapSettings {
                stride: 2,
                init_scale: 2.0,
                init_opacity: 1.0,
                ..MapSettings::default()
            },
            min_step: 0.01,
            max_step: 0.03,
            max_turn_deg: 0.5,
            accel: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub nodes: usize,
    pub rotation_error: f64,
    pub translation_error: f64,
    /// Translation error of the inertia prediction the solve started from.
    pub initial_translation_error: f64,
    pub edges: usize,
}

/// One seeded segment: ground truth, the map from its first frame and the
/// three frames (two history, one target).
pub struct Segment {
    pub scene: SyntheticScene,
    pub gt: Vec<Pose>,
    pub map: GaussianMap,
    pub frames: Vec<Frame>,
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn segment(bench: &LgrBenchmark, trial: usize, scene: &SyntheticScene, exec: Exec) -> Segment {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(bench.seed, trial));
    let unit = |rng: &mut ChaCha8Rng| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let start = unit(&mut rng).component_mul(&Vector3::new(0.3, 0.2, 0.3));
    let look = Vector3::new(0.0, 0.0, 2.5) + unit(&mut rng).component_mul(&Vector3::new(1.0, 0.4, 0.0));
    let dir = unit(&mut rng).normalize();
    let turn = unit(&mut rng) * bench.max_turn_deg.to_radians() / 3f64.sqrt();
    let step = rng.gen_range(bench.min_step..=bench.max_step);
    let accel = unit(&mut rng) * step * bench.accel;
    let p0 = Pose::look_at(start, look, -Vector3::y());
    let dr = UnitQuaternion::from_scaled_axis(turn);
    let gt: Vec<Pose> = (0..3)
        .map(|i| {
            let t = i as f64;
            let rot = p0.rotation() * dr.powf(t);
            Pose::new(rot, start + dir * step * t + accel * 0.5 * t * t)
        })
        .collect();
    let k = desk_intrinsics();
    let mut map = GaussianMap::new();
    let mut frames = Vec::with_capacity(3);
    for (i, p) in gt.iter().enumerate() {
        let (rgb, depth) = render_synthetic_with(scene, p, &k, exec);
        if i == 0 {
            map.extend(init_from_depth(&rgb, &depth, &Pose::identity(), &k, None, &bench.map), 0);
        }
        frames.push(Frame::new(i, i as f64, rgb, depth, k).expect("matching dims"));
    }
    Segment {
        scene: scene.clone(),
        gt,
        map,
        frames,
    }
}

/// Tracks the segment's target frame with a graph of `nodes` nodes.
pub fn run_trial(bench: &LgrBenchmark, seg: &Segment, trial: usize, nodes: usize) -> Result<TrialResult, TrackError> {
    let mut flow = OracleFlow::new(
        seg.scene.clone(),
        seg.gt.clone(),
        desk_intrinsics(),
        bench.flow,
        trial_seed(bench.seed, trial),
    );
    flow.anchor = seg.gt[0];
    let rel = |i: usize| seg.gt[0].inverse().compose(&seg.gt[i]);
    let mut settings = bench.tracker;
    settings.sampling.nodes = nodes;
    settings.sampling.seed = trial_seed(bench.seed, trial);
    let history = [(&seg.frames[0], rel(0)), (&seg.frames[1], rel(1))];
    let r = feedforward_track(&seg.map, &history, &seg.frames[2], &flow, &settings, false)?;
    let truth = rel(2);
    Ok(TrialResult {
        trial,
        nodes,
        rotation_error: r.pose.angle_to(&truth),
        translation_error: r.pose.distance_to(&truth),
        initial_translation_error: r.initial.distance_to(&truth),
        edges: r.edges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub nodes: usize,
    pub trials: usize,
    pub failures: usize,
    pub median_translation: f64,
    pub median_rotation: f64,
    pub mean_edges: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs every trial for each graph size. Trials run in parallel; each one
/// renders and tracks sequentially so results do not depend on scheduling.
/// A failed solve counts as an infinite error.
pub fn compare_graph_sizes(bench: &LgrBenchmark, sizes: &[usize], exec: Exec) -> Vec<(ArmSummary, Vec<TrialResult>)> {
    let scene = SyntheticScene::new(SceneSpec::default());
    let mut inner = *bench;
    inner.tracker.exec = Exec::Sequential;
    let per_trial: Vec<Vec<Option<TrialResult>>> = exec.map(bench.trials, |t| {
        let seg = segment(&inner, t, &scene, Exec::Sequential);
        sizes.iter().map(|&n| run_trial(&inner, &seg, t, n).ok()).collect()
    });
    sizes
        .iter()
        .enumerate()
        .map(|(a, &nodes)| {
            let results: Vec<TrialResult> = per_trial.iter().filter_map(|r| r[a]).collect();
            let failures = bench.trials - results.len();
            let pad = std::iter::repeat(f64::INFINITY).take(failures);
            let mut trans: Vec<f64> = results.iter().map(|r| r.translation_error).chain(pad.clone()).collect();
            let mut rot: Vec<f64> = results.iter().map(|r| r.rotation_error).chain(pad).collect();
            let mean_edges = results.iter().map(|r| r.edges as f64).sum::<f64>() / results.len().max(1) as f64;
            (
                ArmSummary {
                    nodes,
                    trials: bench.trials,
                    failures,
                    median_translation: median(&mut trans),
                    median_rotation: median(&mut rot),
                    mean_edges,
                },
                results,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cases() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
        assert_eq!(median(&mut [1.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
    }

    #[test]
    fn trials_are_reproducible_and_paired() {
        let bench = LgrBenchmark {
            trials: 2,
            ..Default::default()
        };
        let a = compare_graph_sizes(&bench, &[1, 3], Exec::Sequential);
        let b = compare_graph_sizes(&bench, &[1, 3], Exec::default());
        assert_eq!(a, b);
        assert_eq!(a[0].1.len(), 2);
        assert!(a[1].0.mean_edges > a[0].0.mean_edges);
    }

    #[test]
    fn exact_flow_single_edge_is_exact() {
        let bench = LgrBenchmark {
            flow: FlowNoise::exact(),
            ..Default::default()
        };
        let scene = SyntheticScene::new(SceneSpec::default());
        let seg = segment(&bench, 0, &scene, Exec::default());
        let r = run_trial(&bench, &seg, 0, 1).unwrap();
        assert!(r.translation_error < 1e-6 && r.rotation_error < 1e-6, "{r:?}");
        assert!(r.initial_translation_error > 1e-4);
    }
}
