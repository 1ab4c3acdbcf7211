//! Feature-to-map registration.
//!
//! Each feature is matched to its five nearest map points of the same kind.
//! The neighbourhood must pass a rough filter (a clean line fit for edges,
//! an inlier plane fit for surfaces) before it contributes a point-to-line
//! or point-to-plane residual. The pose is then refined by Gauss-Newton on
//! SE(3) with a Huber loss, using the left perturbation `T ← exp(δ) ∘ T`.

use nalgebra::{Matrix6, RowVector6, SymmetricEigen, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{covariance, FeatureKind, FeaturePoint};
use crate::geometry::{Point3, Pose, Twist};
use crate::map::{KindMap, MapPointId};

/// Neighbours per correspondence.
pub const NEIGHBORS: usize = 5;

/// Minimum number of valid correspondences for a solve.
pub const MIN_CORRESPONDENCES: usize = 10;

const MAX_DAMPING_FAILURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineModel {
    pub center: Point3,
    pub direction: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub center: Point3,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Line(LineModel),
    Plane(PlaneModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    /// De-skewed feature in the sensor frame.
    pub feature: FeaturePoint,
    pub neighbor_ids: Vec<MapPointId>,
    pub model: Option<Model>,
}

impl Correspondence {
    pub fn is_valid(&self) -> bool {
        self.model.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the norm of the twist update.
    pub tolerance: f64,
    /// Initial damping; 0 is plain Gauss-Newton.
    pub damping: f64,
    /// Damping used once a step fails to decrease the cost.
    pub fallback_damping: f64,
    pub max_correspondence_distance: f64,
    /// Line fits need `λ1 >= edge_eigen_ratio · λ2`.
    pub edge_eigen_ratio: f64,
    pub plane_inlier_distance: f64,
    /// Plane fits need `λ2 >= plane_min_spread · λ1`.
    pub plane_min_spread: f64,
    pub huber_delta: f64,
    /// Match/solve rounds per frame.
    pub passes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            tolerance: 1e-6,
            damping: 0.0,
            fallback_damping: 1e-4,
            max_correspondence_distance: 1.0,
            edge_eigen_ratio: 3.0,
            plane_inlier_distance: 0.2,
            plane_min_spread: 0.01,
            huber_delta: 0.5,
            passes: 2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.tolerance,
            self.fallback_damping,
            self.max_correspondence_distance,
            self.edge_eigen_ratio,
            self.plane_inlier_distance,
            self.huber_delta,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.damping < 0.0 || !(0.0..1.0).contains(&self.plane_min_spread) {
            return Err(Error::Config("solver parameters must be positive".into()));
        }
        if self.max_iterations == 0 || self.passes == 0 {
            return Err(Error::Config("max_iterations and passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// The five nearest same-kind map points to `T·p`, or nothing when even
/// the nearest lies beyond the correspondence gate.
pub fn find_correspondence(
    p: &FeaturePoint,
    map: &KindMap,
    count: usize,
    pose: &Pose,
    max_distance: f64,
) -> Vec<MapPointId> {
    let query = pose.transform_point(&p.position);
    let found = map.tree().knn(&query, count);
    match found.first() {
        Some(n) if n.dist2 <= max_distance * max_distance => found.iter().map(|n| n.id).collect(),
        _ => Vec::new(),
    }
}

/// Principal-axis line through the points, accepted when clearly elongated.
pub fn fit_line(points: &[Point3], eigen_ratio: f64) -> Option<LineModel> {
    if points.len() < 2 {
        return None;
    }
    let (center, cov) = covariance(points);
    let (values, vectors) = sorted_eigen(cov);
    if !(values[0] > 0.0) || values[0] < eigen_ratio * values[1] {
        return None;
    }
    Some(LineModel {
        center,
        direction: canonical_sign(vectors[0]),
    })
}

/// Least-squares plane, accepted when every point lies within
/// `inlier_distance` and the set spreads in two directions: the second
/// covariance eigenvalue must reach `min_spread` times the first.
pub fn fit_plane(points: &[Point3], inlier_distance: f64, min_spread: f64) -> Option<PlaneModel> {
    if points.len() < 3 {
        return None;
    }
    let (center, cov) = covariance(points);
    let (values, vectors) = sorted_eigen(cov);
    // Near-collinear sets leave the normal free to spin about the line.
    if !(values[0] > 0.0) || values[1] <= min_spread.max(1e-10) * values[0] {
        return None;
    }
    let normal = canonical_sign(vectors[2]);
    if points
        .iter()
        .any(|p| (p - center).dot(&normal).abs() > inlier_distance)
    {
        return None;
    }
    Some(PlaneModel { center, normal })
}

/// Eigenpairs of a symmetric 3x3 matrix sorted by descending eigenvalue.
fn sorted_eigen(m: nalgebra::Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let eig = SymmetricEigen::new(m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (
        idx.map(|i| eig.eigenvalues[i]),
        idx.map(|i| eig.eigenvectors.column(i).normalize()),
    )
}

/// Sign convention: non-negative z, then non-negative x, then non-negative y.
fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let key = if v.z != 0.0 {
        v.z
    } else if v.x != 0.0 {
        v.x
    } else {
        v.y
    };
    if key < 0.0 {
        -v
    } else {
        v
    }
}

/// Point-to-line distance `|(T·p - c) × n|`.
pub fn edge_residual(p: &Point3, model: &LineModel, pose: &Pose) -> f64 {
    (pose.transform_point(p) - model.center)
        .cross(&model.direction)
        .norm()
}

/// Signed point-to-plane distance `(T·p - c) · n`.
pub fn surf_residual(p: &Point3, model: &PlaneModel, pose: &Pose) -> f64 {
    (pose.transform_point(p) - model.center).dot(&model.normal)
}

pub fn residual(p: &Point3, model: &Model, pose: &Pose) -> f64 {
    match model {
        Model::Line(l) => edge_residual(p, l, pose),
        Model::Plane(s) => surf_residual(p, s, pose),
    }
}

/// Residual and its derivative with respect to a left twist perturbation
/// `[δω, δv]` evaluated at `pose`.
pub fn residual_jacobian(p: &Point3, model: &Model, pose: &Pose) -> (f64, RowVector6<f64>) {
    let q = pose.transform_point(p);
    // d(q)/d(δω) = -[q]x, d(q)/d(δv) = I; so for a gradient g wrt q the row
    // is [(q × g)ᵀ, gᵀ].
    let (r, g) = match model {
        Model::Plane(s) => ((q - s.center).dot(&s.normal), s.normal),
        Model::Line(l) => {
            let w = (q - l.center).cross(&l.direction);
            let d = w.norm();
            if d < 1e-12 {
                (d, Vector3::zeros())
            } else {
                (d, l.direction.cross(&w) / d)
            }
        }
    };
    let a = q.cross(&g);
    (r, RowVector6::new(a.x, a.y, a.z, g.x, g.y, g.z))
}

/// Matches every feature of one kind against `map` at `pose` and applies
/// the rough filter.
pub fn build_correspondences(
    features: &[FeaturePoint],
    map: &KindMap,
    pose: &Pose,
    cfg: &SolverConfig,
) -> Vec<Correspondence> {
    if map.len() < NEIGHBORS {
        return features
            .iter()
            .map(|f| Correspondence {
                feature: *f,
                neighbor_ids: Vec::new(),
                model: None,
            })
            .collect();
    }
    features
        .par_iter()
        .map(|f| {
            let neighbor_ids = find_correspondence(f, map, NEIGHBORS, pose, cfg.max_correspondence_distance);
            let model = if neighbor_ids.is_empty() {
                None
            } else {
                let pts: Vec<Point3> = neighbor_ids
                    .iter()
                    .filter_map(|id| map.get(*id).map(|p| p.position))
                    .collect();
                match f.kind {
                    FeatureKind::Edge => fit_line(&pts, cfg.edge_eigen_ratio).map(Model::Line),
                    FeatureKind::Surface => fit_plane(&pts, cfg.plane_inlier_distance, cfg.plane_min_spread).map(Model::Plane),
                }
            };
            Correspondence {
                feature: *f,
                neighbor_ids,
                model,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveResult {
    pub pose: Pose,
    pub iterations: usize,
    pub cost: f64,
    pub converged: bool,
}

fn huber(r: f64, delta: f64) -> (f64, f64) {
    let a = r.abs();
    if a <= delta {
        (0.5 * r * r, 1.0)
    } else {
        (delta * (a - 0.5 * delta), delta / a)
    }
}

fn total_cost(items: &[(&Point3, &Model)], pose: &Pose, delta: f64) -> f64 {
    items
        .iter()
        .map(|(p, m)| huber(residual(p, m, pose), delta).0)
        .sum()
}

/// Minimises the robust sum of residuals over the valid correspondences.
pub fn solve_pose(correspondences: &[Correspondence], initial: &Pose, cfg: &SolverConfig) -> Result<SolveResult> {
    let items: Vec<(&Point3, &Model)> = correspondences
        .iter()
        .filter_map(|c| c.model.as_ref().map(|m| (&c.feature.position, m)))
        .collect();
    if items.len() < MIN_CORRESPONDENCES {
        return Err(Error::DegenerateRegistration {
            valid: items.len(),
            required: MIN_CORRESPONDENCES,
        });
    }

    let delta = cfg.huber_delta;
    let mut pose = *initial;
    let mut cost = total_cost(&items, &pose, delta);
    let mut lambda = cfg.damping;
    let mut failures = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        // Sequential accumulation keeps the reduction order fixed.
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for (p, m) in &items {
            let (r, j) = residual_jacobian(p, m, &pose);
            let w = huber(r, delta).1;
            let jt = j.transpose();
            h += jt * j * w;
            g += jt * (w * r);
        }

        loop {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-9);
            }
            let Some(chol) = damped.cholesky() else {
                failures += 1;
                if failures >= MAX_DAMPING_FAILURES {
                    return Err(Error::SingularSystem { attempts: failures });
                }
                lambda = if lambda == 0.0 { cfg.fallback_damping } else { lambda * 10.0 };
                continue;
            };
            let step = -chol.solve(&g);
            let candidate = Pose::exp(&Twist::from_vector(&step)).compose(&pose);
            let new_cost = total_cost(&items, &candidate, delta);
            if new_cost <= cost {
                pose = candidate;
                cost = new_cost;
                if step.norm() < cfg.tolerance {
                    converged = true;
                }
                break;
            }
            // Cost went up: engage or strengthen Levenberg damping.
            if step.norm() < cfg.tolerance {
                converged = true;
                break;
            }
            lambda = if lambda == 0.0 { cfg.fallback_damping } else { lambda * 10.0 };
            if lambda > 1e8 {
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }

    Ok(SolveResult {
        pose,
        iterations,
        cost,
        converged,
    })
}
