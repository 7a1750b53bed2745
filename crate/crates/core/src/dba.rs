//! Fixed-depth, confidence-weighted damped Gauss-Newton solve for a single
//! unknown camera pose over a set of posed edges.

use nalgebra::{Matrix2x6, Matrix3, Matrix6, Vector2, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::geometry::{backproject, skew, Intrinsics, PixelField, Pose, Tangent, MIN_DEPTH};
use crate::image::DepthMap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DbaError {
    #[error("problem has no edges")]
    NoEdges,
    #[error("all constraint weights are zero")]
    ZeroWeights,
    #[error("edge {edge}: grids disagree in size")]
    DimensionMismatch { edge: usize },
}

/// Which endpoint of the edge carries the depth map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeDirection {
    /// Pixels of the neighbor, lifted with its depth, land in the target.
    NeighborToTarget,
    /// Pixels of the target, lifted with its depth, land in the neighbor.
    TargetToNeighbor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbaEdge {
    pub neighbor_pose: Pose,
    pub direction: EdgeDirection,
    /// Depth of the source view on the coarse grid.
    pub depth: DepthMap,
    /// Corrected correspondences `p*` in the destination view.
    pub target: PixelField,
    pub weights: Vec<[f64; 2]>,
}

impl DbaEdge {
    fn check(&self) -> bool {
        let dims = (self.depth.width(), self.depth.height());
        self.target.dims() == dims && self.weights.len() == dims.0 * dims.1 && self.neighbor_pose.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbaSettings {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_grow: f64,
    pub damping_shrink: f64,
    pub max_damping: f64,
    /// Stop once the step norm falls below this.
    pub tolerance: f64,
    /// Huber threshold in pixels; `None` keeps plain weighted least squares.
    pub huber: Option<f64>,
}

impl Default for DbaSettings {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            initial_damping: 1e-4,
            damping_grow: 10.0,
            damping_shrink: 0.5,
            max_damping: 1e10,
            tolerance: 1e-8,
            huber: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbaProblem {
    pub edges: Vec<DbaEdge>,
    pub initial: Pose,
    /// Camera of the coarse grid.
    pub intrinsics: Intrinsics,
    pub settings: DbaSettings,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbaSolution {
    pub pose: Pose,
    /// Final weighted squared residual, px².
    pub residual: f64,
    /// Sum of the weights behind `residual`.
    pub weight_sum: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The normal matrix stayed singular under maximal damping.
    pub singular: bool,
    /// Residual after each accepted step, starting with the initial one.
    pub history: Vec<f64>,
}

impl DbaSolution {
    /// Weighted mean squared residual, px².
    pub fn mean_residual(&self) -> f64 {
        if self.weight_sum > 0.0 {
            self.residual / self.weight_sum
        } else {
            f64::INFINITY
        }
    }
}

/// Per-pixel linearization of one edge. Rows of pixels that are invalid or
/// land behind the camera carry zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLinearization {
    pub residuals: Vec<Vector2<f64>>,
    pub jacobians: Vec<Matrix2x6<f64>>,
    pub weights: Vec<[f64; 2]>,
}

/// Residuals `p* − π(X)` and their Jacobians with respect to the right
/// tangent perturbation `G_t ∘ exp(ξ)` of the target pose.
pub fn residuals_and_jacobian(edge: &DbaEdge, target_pose: &Pose, k: &Intrinsics) -> EdgeLinearization {
    let n = edge.weights.len();
    let mut out = EdgeLinearization {
        residuals: vec![Vector2::zeros(); n],
        jacobians: vec![Matrix2x6::zeros(); n],
        weights: vec![[0.0; 2]; n],
    };
    let rel = edge_transform(edge, target_pose);
    let r_rel = rel.rotation_matrix();
    let w = edge.depth.width();
    for i in 0..n {
        let wt = edge.weights[i];
        if !edge.target.valid[i] || (wt[0] <= 0.0 && wt[1] <= 0.0) {
            continue;
        }
        let Some(d) = edge.depth.get_index(i) else { continue };
        let p = Vector2::new((i % w) as f64, (i / w) as f64);
        let Ok(xs) = backproject(&p, d, k) else { continue };
        let x = rel.transform_point(&xs);
        if x.z <= MIN_DEPTH {
            continue;
        }
        let iz = 1.0 / x.z;
        let proj = Vector2::new(k.fx * x.x * iz + k.cx, k.fy * x.y * iz + k.cy);
        let jpi = nalgebra::Matrix2x3::new(
            k.fx * iz,
            0.0,
            -k.fx * x.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * x.y * iz * iz,
        );
        // d(landed point)/d(ω, v).
        let (dw, dv): (Matrix3<f64>, Matrix3<f64>) = match edge.direction {
            // X = exp(−ξ)·X_t to first order: X + X×ω − v.
            EdgeDirection::NeighborToTarget => (skew(&x), -Matrix3::identity()),
            // X = R_rel (X_s + ω×X_s + v) + t_rel.
            EdgeDirection::TargetToNeighbor => (-r_rel * skew(&xs), r_rel),
        };
        let mut j = Matrix2x6::zeros();
        j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(-jpi * dw));
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-jpi * dv));
        out.residuals[i] = edge.target.coords[i] - proj;
        out.jacobians[i] = j;
        out.weights[i] = wt;
    }
    out
}

/// Effective weights after optional Huber reweighting.
fn robust_weight(w: f64, r: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(delta) if r.abs() > delta => w * delta / r.abs(),
        _ => w,
    }
}

fn robust_cost(w: f64, r: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(delta) if r.abs() > delta => w * delta * (2.0 * r.abs() - delta),
        _ => w * r * r,
    }
}

struct Normal {
    h: Matrix6<f64>,
    g: Vector6<f64>,
    cost: f64,
    weight: f64,
}

fn accumulate(lin: &EdgeLinearization, huber: Option<f64>, with_jacobian: bool) -> Normal {
    let mut n = Normal {
        h: Matrix6::zeros(),
        g: Vector6::zeros(),
        cost: 0.0,
        weight: 0.0,
    };
    for i in 0..lin.residuals.len() {
        let r = lin.residuals[i];
        let w = lin.weights[i];
        if w[0] <= 0.0 && w[1] <= 0.0 {
            continue;
        }
        for a in 0..2 {
            n.cost += robust_cost(w[a], r[a], huber);
            n.weight += w[a];
            if with_jacobian {
                let row = lin.jacobians[i].row(a).transpose();
                let we = robust_weight(w[a], r[a], huber);
                n.h += row * row.transpose() * we;
                n.g += row * (we * r[a]);
            }
        }
    }
    n
}

fn assemble(problem: &DbaProblem, pose: &Pose, with_jacobian: bool) -> Normal {
    let k = &problem.intrinsics;
    let huber = problem.settings.huber;
    let parts = problem.exec.map(problem.edges.len(), |e| {
        accumulate(&residuals_and_jacobian(&problem.edges[e], pose, k), huber, with_jacobian)
    });
    // Ordered reduction keeps results independent of scheduling.
    parts.into_iter().fold(
        Normal {
            h: Matrix6::zeros(),
            g: Vector6::zeros(),
            cost: 0.0,
            weight: 0.0,
        },
        |mut acc, p| {
            acc.h += p.h;
            acc.g += p.g;
            acc.cost += p.cost;
            acc.weight += p.weight;
            acc
        },
    )
}

pub fn solve(problem: &DbaProblem) -> Result<DbaSolution, DbaError> {
    if problem.edges.is_empty() {
        return Err(DbaError::NoEdges);
    }
    for (e, edge) in problem.edges.iter().enumerate() {
        if !edge.check() {
            return Err(DbaError::DimensionMismatch { edge: e });
        }
    }
    let s = &problem.settings;
    let mut pose = problem.initial;
    let mut normal = assemble(problem, &pose, true);
    if normal.weight <= 0.0 {
        return Err(DbaError::ZeroWeights);
    }
    let mut history = vec![normal.cost];
    let mut lambda = s.initial_damping;
    let mut converged = false;
    let mut singular = false;
    let mut iterations = 0;

    'outer: while iterations < s.max_iterations {
        iterations += 1;
        loop {
            let mut a = normal.h;
            for d in 0..6 {
                // Floor keeps the damping effective on unobserved directions.
                a[(d, d)] += lambda * normal.h[(d, d)].max(1e-9);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= s.damping_grow;
                if lambda > s.max_damping {
                    singular = true;
                    break 'outer;
                }
                continue;
            };
            // r + Jξ → min gives (JᵀWJ)ξ = −JᵀWr.
            let xi = chol.solve(&(-normal.g));
            if xi.norm() < s.tolerance {
                converged = true;
                break 'outer;
            }
            let candidate = pose.retract(&Tangent(xi));
            let trial = assemble(problem, &candidate, false);
            if trial.cost < normal.cost && trial.weight > 0.0 {
                pose = candidate;
                normal = assemble(problem, &pose, true);
                history.push(normal.cost);
                lambda = (lambda * s.damping_shrink).max(1e-12);
                continue 'outer;
            }
            lambda *= s.damping_grow;
            if lambda > s.max_damping {
                // No descent left at any step length: a local minimum.
                converged = true;
                break 'outer;
            }
        }
    }

    if singular {
        let initial = assemble(problem, &problem.initial, false);
        return Ok(DbaSolution {
            pose: problem.initial,
            residual: initial.cost,
            weight_sum: initial.weight,
            iterations,
            converged: false,
            singular: true,
            history,
        });
    }
    Ok(DbaSolution {
        pose,
        residual: normal.cost,
        weight_sum: normal.weight,
        iterations,
        converged,
        singular: false,
        history,
    })
}

/// Destination-from-source transform of an edge at the given target pose.
pub fn edge_transform(edge: &DbaEdge, target_pose: &Pose) -> Pose {
    match edge.direction {
        EdgeDirection::NeighborToTarget => target_pose.inverse().compose(&edge.neighbor_pose),
        EdgeDirection::TargetToNeighbor => edge.neighbor_pose.inverse().compose(target_pose),
    }
}

/// Applies a rigid world transform to every pose of the problem.
pub fn transform_problem(problem: &DbaProblem, w: &Pose) -> DbaProblem {
    let mut out = problem.clone();
    out.initial = w.compose(&problem.initial);
    for e in &mut out.edges {
        e.neighbor_pose = w.compose(&e.neighbor_pose);
    }
    out
}
