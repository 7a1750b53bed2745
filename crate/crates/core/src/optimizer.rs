//! Render-and-backpropagate optimization: map refinement over a keyframe
//! window with fixed poses, and the iterative per-frame pose tracker.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::frame::Frame;
use crate::gaussian_map::{Gaussian, GaussianMap, MapSettings};
use crate::geometry::{Pose, Tangent};
use crate::renderer::{render_loss, render_with_gradients_exec, LossSpec, RenderGradients};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("keyframe window is empty")]
    EmptyWindow,
    #[error("map is empty")]
    EmptyMap,
    #[error("non-finite loss or gradient")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub center: f64,
    pub radius: f64,
    pub opacity: f64,
    pub color: f64,
    pub pose_rotation: f64,
    pub pose_translation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            center: 1e-4,
            radius: 1e-3,
            opacity: 5e-2,
            color: 2.5e-3,
            pose_rotation: 2e-3,
            pose_translation: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSettings {
    pub it_map: usize,
    pub it_track: usize,
    pub rates: LearningRates,
    pub color_weight: f64,
    /// Depth residuals are in meters against unit-range color, so this
    /// sits well above the color weight.
    pub depth_weight: f64,
    /// Tracking only scores pixels whose silhouette exceeds this.
    pub track_silhouette: f64,
    pub window_size: usize,
    /// Every n-th frame becomes a keyframe.
    pub keyframe_every: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            it_map: 60,
            it_track: 40,
            rates: LearningRates::default(),
            color_weight: 1.0,
            depth_weight: 10.0,
            track_silhouette: 0.8,
            window_size: 8,
            keyframe_every: 5,
            exec: Exec::default(),
        }
    }
}

/// Recent posed frames driving map refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeWindow {
    capacity: usize,
    entries: VecDeque<(Arc<Frame>, Pose)>,
}

impl KeyframeWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    /// Appends a keyframe, evicting the oldest beyond capacity.
    pub fn push(&mut self, frame: Arc<Frame>, pose: Pose) {
        self.entries.push_back((frame, pose));
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &(Arc<Frame>, Pose)> {
        self.entries.iter()
    }

    pub fn latest(&self) -> Option<&(Arc<Frame>, Pose)> {
        self.entries.back()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// The window as used for mapping at a new frame: the keyframes plus
    /// the current frame, trimmed to capacity.
    pub fn with_current(&self, frame: Arc<Frame>, pose: Pose) -> KeyframeWindow {
        let mut w = self.clone();
        let already = w.latest().is_some_and(|(f, _)| Arc::ptr_eq(f, &frame));
        if !already {
            w.push(frame, pose);
        }
        w
    }
}

/// Adam moments over a flat parameter vector with per-entry rates.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-15;

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Returns the descent step for gradient `g`.
    fn step(&mut self, g: &[f64], rates: &[f64]) -> Vec<f64> {
        self.t += 1;
        let b1 = 1.0 - BETA1.powi(self.t);
        let b2 = 1.0 - BETA2.powi(self.t);
        (0..g.len())
            .map(|i| {
                self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g[i];
                self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g[i] * g[i];
                let mh = self.m[i] / b1;
                let vh = self.v[i] / b2;
                -rates[i] * mh / (vh.sqrt() + ADAM_EPS)
            })
            .collect()
    }
}

const PARAMS: usize = 8;

fn flatten_grads(g: &RenderGradients) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.radii.len() * PARAMS);
    for i in 0..g.radii.len() {
        let c = g.centers[i];
        out.extend_from_slice(&[c.x, c.y, c.z, g.radii[i], g.opacities[i]]);
        out.extend_from_slice(&g.colors[i]);
    }
    out
}

fn rate_vector(n: usize, r: &LearningRates) -> Vec<f64> {
    let per = [r.center, r.center, r.center, r.radius, r.opacity, r.color, r.color, r.color];
    (0..n * PARAMS).map(|i| per[i % PARAMS]).collect()
}

fn apply_step(gaussians: &mut [Gaussian], step: &[f64], map_settings: &MapSettings) {
    for (i, g) in gaussians.iter_mut().enumerate() {
        let s = &step[i * PARAMS..(i + 1) * PARAMS];
        g.center.x += s[0];
        g.center.y += s[1];
        g.center.z += s[2];
        g.radius += s[3];
        g.opacity += s[4];
        for c in 0..3 {
            g.color[c] += s[5 + c];
        }
        g.clamp(map_settings.min_radius, map_settings.max_radius);
    }
}

fn frame_spec<'a>(frame: &'a Frame, s: &OptimSettings, mask: Option<f64>) -> LossSpec<'a> {
    LossSpec {
        target_color: &frame.rgb,
        target_depth: &frame.depth,
        color_weight: s.color_weight,
        depth_weight: s.depth_weight,
        silhouette_mask: mask,
    }
}

/// Summed unmasked loss of the map over the window.
pub fn window_loss(map: &GaussianMap, window: &KeyframeWindow, settings: &OptimSettings) -> f64 {
    window
        .entries()
        .map(|(f, p)| render_loss(map, p, &f.intrinsics, &frame_spec(f, settings, None), settings.exec))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
}

/// Refines all Gaussians against the window with poses held fixed. The map
/// ends at the lowest-loss parameters visited, so the loss never increases.
pub fn mapping_step(
    map: &mut GaussianMap,
    window: &KeyframeWindow,
    settings: &OptimSettings,
    map_settings: &MapSettings,
) -> Result<MappingReport, OptimError> {
    if window.is_empty() {
        return Err(OptimError::EmptyWindow);
    }
    let n = map.len();
    let rates = rate_vector(n, &settings.rates);
    let mut adam = Adam::new(n * PARAMS);
    let mut best: Option<(f64, Vec<Gaussian>)> = None;
    let mut initial = f64::NAN;

    for it in 0..settings.it_map {
        let mut loss = 0.0;
        let mut grads = RenderGradients::zeros(n);
        for (frame, pose) in window.entries() {
            let spec = frame_spec(frame, settings, None);
            let (l, g, _) = render_with_gradients_exec(map, pose, &frame.intrinsics, &spec, settings.exec);
            loss += l;
            grads.add_assign(&g);
        }
        if !loss.is_finite() || !grads.is_finite() {
            return Err(OptimError::NonFinite);
        }
        if it == 0 {
            initial = loss;
        }
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, map.gaussians().to_vec()));
        }
        let step = adam.step(&flatten_grads(&grads), &rates);
        apply_step(map.gaussians_mut(), &step, map_settings);
    }

    let last = window_loss(map, window, settings);
    if settings.it_map == 0 {
        return Ok(MappingReport {
            initial_loss: last,
            final_loss: last,
            iterations: 0,
        });
    }
    let final_loss = match best {
        Some((b, params)) if b <= last => {
            map.gaussians_mut().copy_from_slice(&params);
            b
        }
        _ => last,
    };
    Ok(MappingReport {
        initial_loss: initial,
        final_loss,
        iterations: settings.it_map,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackResult {
    pub pose: Pose,
    pub loss: f64,
    pub initial_loss: f64,
    pub iterations: usize,
}

/// Gradient-based pose tracking against `frame`, scoring only pixels the
/// map already explains. Returns the lowest-loss pose encountered.
pub fn track_iterative(
    map: &GaussianMap,
    frame: &Frame,
    init: &Pose,
    settings: &OptimSettings,
) -> Result<TrackResult, OptimError> {
    if map.is_empty() {
        return Err(OptimError::EmptyMap);
    }
    let r = &settings.rates;
    let rates = [
        r.pose_rotation,
        r.pose_rotation,
        r.pose_rotation,
        r.pose_translation,
        r.pose_translation,
        r.pose_translation,
    ];
    let spec = frame_spec(frame, settings, Some(settings.track_silhouette));
    let mut adam = Adam::new(6);
    let mut pose = *init;
    let mut best = (f64::INFINITY, pose);
    let mut initial = f64::NAN;
    for it in 0..settings.it_track {
        let (loss, grads, _) = render_with_gradients_exec(map, &pose, &frame.intrinsics, &spec, settings.exec);
        if !loss.is_finite() || !grads.pose.iter().all(|v| v.is_finite()) {
            break;
        }
        if it == 0 {
            initial = loss;
        }
        if loss < best.0 {
            best = (loss, pose);
        }
        let step = adam.step(grads.pose.as_slice(), &rates);
        pose = pose.retract(&Tangent(Vector6::from_column_slice(&step)));
    }
    let last = render_loss(map, &pose, &frame.intrinsics, &spec, settings.exec);
    if initial.is_nan() {
        initial = last;
    }
    if last.is_finite() && last < best.0 {
        best = (last, pose);
    }
    if !best.0.is_finite() {
        return Err(OptimError::NonFinite);
    }
    Ok(TrackResult {
        pose: best.1,
        loss: best.0,
        initial_loss: initial,
        iterations: settings.it_track,
    })
}
