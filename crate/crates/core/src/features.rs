//! Edge and surface feature extraction.
//!
//! Two interchangeable extractors are provided. The ring extractor scores
//! each point by a normalised neighbourhood sum along its laser ring; the
//! eigen extractor classifies points by the linearity and planarity of the
//! covariance of their nearest neighbours. Both share the same per-sector
//! selection (caps plus neighbour suppression) so they produce comparable
//! feature counts.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::kdtree::KdTree;
use crate::scan::Scan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Edge,
    Surface,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Edge => "edge",
            FeatureKind::Surface => "surface",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    /// Sensor-frame position (before de-skewing, unless de-skewed since).
    pub position: Point3,
    pub rel_time: f64,
    pub kind: FeatureKind,
    /// Estimated persistence of the feature, assigned during the map update.
    pub pindex_estimate: f64,
    pub ring: u16,
    /// Index of the originating point in `Scan::points`.
    pub source_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub frame_index: usize,
    pub edges: Vec<FeaturePoint>,
    pub surfaces: Vec<FeaturePoint>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.edges.len() + self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.surfaces.is_empty()
    }

    pub fn of_kind(&self, kind: FeatureKind) -> &[FeaturePoint] {
        match kind {
            FeatureKind::Edge => &self.edges,
            FeatureKind::Surface => &self.surfaces,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMethod {
    #[default]
    Ring,
    Eigen,
}

impl std::str::FromStr for ExtractionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Self::Ring),
            "eigen" => Ok(Self::Eigen),
            other => Err(Error::Config(format!("unknown extraction method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub method: ExtractionMethod,
    /// Neighbours on each side used for smoothness and suppression.
    pub half_width: usize,
    pub edge_threshold: f64,
    pub surface_threshold: f64,
    pub sectors: usize,
    pub max_edges_per_sector: usize,
    pub max_surfaces_per_sector: usize,
    /// Neighbourhood size for the eigen method.
    pub eigen_neighbors: usize,
    /// Eigen edges need neighbours from at least this many rings; a
    /// neighbourhood inside one ring just traces the scan line.
    pub eigen_edge_min_rings: usize,
    pub linearity_threshold: f64,
    pub planarity_threshold: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            method: ExtractionMethod::Ring,
            half_width: 5,
            edge_threshold: 0.1,
            surface_threshold: 0.01,
            sectors: 6,
            max_edges_per_sector: 4,
            max_surfaces_per_sector: 40,
            eigen_neighbors: 10,
            eigen_edge_min_rings: 3,
            linearity_threshold: 0.7,
            planarity_threshold: 0.6,
            min_range: 2.0,
            max_range: 80.0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("edge_threshold", self.edge_threshold),
            ("surface_threshold", self.surface_threshold),
            ("linearity_threshold", self.linearity_threshold),
            ("planarity_threshold", self.planarity_threshold),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.half_width < 1 {
            return Err(Error::Config("half_width must be at least 1".into()));
        }
        if self.sectors < 1 {
            return Err(Error::Config("sectors must be at least 1".into()));
        }
        if self.eigen_neighbors < 3 {
            return Err(Error::Config("eigen_neighbors must be at least 3".into()));
        }
        if !(self.min_range >= 0.0 && self.max_range > self.min_range) {
            return Err(Error::Config("range gate must satisfy 0 <= min < max".into()));
        }
        Ok(())
    }
}

/// Smoothness of `ring[i]`: `|Σ_j (p_j - p_i)| / (|S| · |p_i|)` over the
/// `2 * half_width` ring neighbours. `None` when the window does not fit.
pub fn compute_smoothness(ring: &[Point3], i: usize, half_width: usize) -> Option<f64> {
    if half_width == 0 || i < half_width || i + half_width >= ring.len() {
        return None;
    }
    let p = ring[i];
    let range = p.norm();
    if range == 0.0 {
        return None;
    }
    let mut sum = Point3::zeros();
    for j in (i - half_width)..=(i + half_width) {
        if j != i {
            sum += ring[j] - p;
        }
    }
    Some(sum.norm() / ((2 * half_width) as f64 * range))
}

/// Eigenvalues of the covariance of `points`, sorted descending and
/// clamped at zero.
pub fn local_covariance_eigenvalues(points: &[Point3]) -> Result<[f64; 3]> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            required: 3,
            got: points.len(),
        });
    }
    let cov = covariance(points).1;
    let eig = SymmetricEigen::new(cov);
    let mut values = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values.map(|v| v.max(0.0)))
}

/// Mean and (biased) covariance of a point set.
pub(crate) fn covariance(points: &[Point3]) -> (Point3, Matrix3<f64>) {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Point3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    (mean, cov / n)
}

/// `(linearity, planarity)` from descending eigenvalues; `None` when λ1 = 0.
pub fn linearity_planarity(lambda: [f64; 3]) -> Option<(f64, f64)> {
    let [l1, l2, l3] = lambda;
    if !(l1 > 0.0) {
        return None;
    }
    Some(((l1 - l2) / l1, (l2 - l3) / l1))
}

pub fn extract_features(scan: &Scan, cfg: &ExtractionConfig) -> FeatureSet {
    match cfg.method {
        ExtractionMethod::Ring => extract_ring_features(scan, cfg),
        ExtractionMethod::Eigen => extract_eigen_features(scan, cfg),
    }
}

/// Range-gated points of one ring, in acquisition order.
struct RingPoints {
    ring: u16,
    positions: Vec<Point3>,
    source: Vec<usize>,
}

fn gated_rings(scan: &Scan, cfg: &ExtractionConfig) -> Vec<RingPoints> {
    scan.ring_ranges()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(ring, range)| {
            let mut positions = Vec::with_capacity(range.len());
            let mut source = Vec::with_capacity(range.len());
            for idx in range {
                let p = &scan.points[idx];
                let r = p.range();
                if r >= cfg.min_range && r <= cfg.max_range {
                    positions.push(p.position);
                    source.push(idx);
                }
            }
            RingPoints {
                ring: ring as u16,
                positions,
                source,
            }
        })
        .collect()
}

pub fn extract_ring_features(scan: &Scan, cfg: &ExtractionConfig) -> FeatureSet {
    let rings = gated_rings(scan, cfg);
    let hw = cfg.half_width;
    let per_ring: Vec<(Vec<usize>, Vec<usize>)> = rings
        .par_iter()
        .map(|ring| {
            let n = ring.positions.len();
            if n < 2 * hw + 1 {
                return (Vec::new(), Vec::new());
            }
            let smooth: Vec<Option<f64>> = (0..n)
                .map(|i| compute_smoothness(&ring.positions, i, hw))
                .collect();
            let edge_score: Vec<Option<f64>> = smooth
                .iter()
                .map(|c| c.filter(|&c| c > cfg.edge_threshold))
                .collect();
            let surface_cost: Vec<Option<f64>> = smooth
                .iter()
                .map(|c| c.filter(|&c| c < cfg.surface_threshold))
                .collect();
            select_in_ring(n, hw..n - hw, &edge_score, &surface_cost, cfg)
        })
        .collect();
    assemble(scan, &rings, per_ring)
}

pub fn extract_eigen_features(scan: &Scan, cfg: &ExtractionConfig) -> FeatureSet {
    let rings = gated_rings(scan, cfg);
    let all: Vec<Point3> = rings.iter().flat_map(|r| r.positions.iter().copied()).collect();
    let ring_of: Vec<u16> = rings
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.ring, r.positions.len()))
        .collect();
    let tree = KdTree::from_points(&all);
    let m = cfg.eigen_neighbors;

    let per_ring: Vec<(Vec<usize>, Vec<usize>)> = rings
        .par_iter()
        .map(|ring| {
            let n = ring.positions.len();
            let mut edge_score = vec![None; n];
            let mut surface_cost = vec![None; n];
            let mut hood = Vec::with_capacity(m);
            let mut hood_rings = Vec::with_capacity(m);
            for (i, p) in ring.positions.iter().enumerate() {
                let found = tree.knn(p, m);
                hood.clear();
                hood.extend(found.iter().map(|nb| all[nb.index]));
                hood_rings.clear();
                hood_rings.extend(found.iter().map(|nb| ring_of[nb.index]));
                hood_rings.sort_unstable();
                hood_rings.dedup();
                let Ok(lambda) = local_covariance_eigenvalues(&hood) else {
                    continue;
                };
                let Some((lin, plan)) = linearity_planarity(lambda) else {
                    continue;
                };
                if lin > cfg.linearity_threshold {
                    if hood_rings.len() >= cfg.eigen_edge_min_rings {
                        edge_score[i] = Some(lin);
                    }
                } else if plan > cfg.planarity_threshold {
                    surface_cost[i] = Some(-plan);
                }
            }
            select_in_ring(n, 0..n, &edge_score, &surface_cost, cfg)
        })
        .collect();
    assemble(scan, &rings, per_ring)
}

/// Per-sector selection over ring positions in `span`.
///
/// Edges are taken by descending `edge_score`, surfaces by ascending
/// `surface_cost`; ties fall back to ring position. Each selected point
/// suppresses its `±half_width` ring neighbours.
fn select_in_ring(
    n: usize,
    span: std::ops::Range<usize>,
    edge_score: &[Option<f64>],
    surface_cost: &[Option<f64>],
    cfg: &ExtractionConfig,
) -> (Vec<usize>, Vec<usize>) {
    let hw = cfg.half_width;
    let mut taken = vec![false; n];
    let mut edges = Vec::new();
    let mut surfaces = Vec::new();
    let len = span.len();
    if len == 0 {
        return (edges, surfaces);
    }
    let suppress = |taken: &mut [bool], i: usize| {
        let lo = i.saturating_sub(hw);
        let hi = (i + hw).min(n - 1);
        taken[lo..=hi].iter_mut().for_each(|t| *t = true);
    };

    for s in 0..cfg.sectors {
        let start = span.start + len * s / cfg.sectors;
        let end = span.start + len * (s + 1) / cfg.sectors;

        let mut order: Vec<(f64, usize)> = (start..end)
            .filter_map(|i| edge_score[i].map(|c| (c, i)))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut count = 0;
        for &(_, i) in &order {
            if count >= cfg.max_edges_per_sector {
                break;
            }
            if !taken[i] {
                edges.push(i);
                suppress(&mut taken, i);
                count += 1;
            }
        }

        let mut order: Vec<(f64, usize)> = (start..end)
            .filter_map(|i| surface_cost[i].map(|c| (c, i)))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut count = 0;
        for &(_, i) in &order {
            if count >= cfg.max_surfaces_per_sector {
                break;
            }
            if !taken[i] {
                surfaces.push(i);
                suppress(&mut taken, i);
                count += 1;
            }
        }
    }
    edges.sort_unstable();
    surfaces.sort_unstable();
    (edges, surfaces)
}

fn assemble(scan: &Scan, rings: &[RingPoints], per_ring: Vec<(Vec<usize>, Vec<usize>)>) -> FeatureSet {
    let mut set = FeatureSet {
        frame_index: scan.frame_index,
        ..Default::default()
    };
    let make = |ring: &RingPoints, i: usize, kind: FeatureKind| {
        let src = ring.source[i];
        FeaturePoint {
            position: ring.positions[i],
            rel_time: scan.points[src].rel_time,
            kind,
            pindex_estimate: 0.0,
            ring: ring.ring,
            source_index: src,
        }
    };
    for (ring, (edges, surfaces)) in rings.iter().zip(per_ring) {
        set.edges
            .extend(edges.into_iter().map(|i| make(ring, i, FeatureKind::Edge)));
        set.surfaces
            .extend(surfaces.into_iter().map(|i| make(ring, i, FeatureKind::Surface)));
    }
    set
}
