//! Local feature map with per-point persistence scores.
//!
//! Every map point carries an accumulator `acc` holding its post-increment,
//! pre-discount value `a⁺` from the last update. At frame `k` the new value is
//! `a⁺ = γ·acc + I`, where `I ∈ {0, 1}` records whether the point served as
//! a correspondence neighbour this frame. The discounted score reported to
//! users (the p-Index) is `γ·a⁺`, which equals `Σ γ^(k+1-τ) I(τ)`.
//!
//! The filter keeps a point when `a⁺ > θ_p`, promotes it to permanent when
//! it also reaches `θ_max`, and gives fresh points a grace window of
//! `κ_new` frames. Permanent points are never removed by the filter, only by
//! the spatial crop around the sensor.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeaturePoint};
use crate::geometry::{Point3, Pose};
use crate::kdtree::KdTree;

pub type MapPointId = u64;

/// Which accumulator value the thresholds are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdConvention {
    /// Compare `a⁺` (post-increment, before the discount).
    #[default]
    PreDiscount,
    /// Compare the discounted p-Index `γ·a⁺`.
    PostDiscount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// When false, no point is ever deleted for lack of persistence.
    pub enabled: bool,
    pub theta_p: f64,
    pub theta_max: f64,
    pub kappa_new: usize,
    pub gamma: f64,
    pub edge_voxel: f64,
    pub surface_voxel: f64,
    pub crop_radius: f64,
    pub convention: ThresholdConvention,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            enabled: true,
            theta_p: 1.5,
            theta_max: 2.0,
            kappa_new: 2,
            gamma: 0.6,
            edge_voxel: 0.4,
            surface_voxel: 0.8,
            crop_radius: 100.0,
            convention: ThresholdConvention::PreDiscount,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.theta_p > 0.0) || !(self.theta_max > 0.0) {
            return Err(Error::Config("theta_p and theta_max must be positive".into()));
        }
        if !(self.edge_voxel > 0.0 && self.surface_voxel > 0.0 && self.crop_radius > 0.0) {
            return Err(Error::Config("voxel sizes and crop radius must be positive".into()));
        }
        Ok(())
    }

    pub fn voxel(&self, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::Edge => self.edge_voxel,
            FeatureKind::Surface => self.surface_voxel,
        }
    }

    /// Supremum of the discounted p-Index, `γ / (1 - γ)`.
    pub fn pindex_limit(&self) -> f64 {
        self.gamma / (1.0 - self.gamma)
    }

    fn compared(&self, a_plus: f64) -> f64 {
        match self.convention {
            ThresholdConvention::PreDiscount => a_plus,
            ThresholdConvention::PostDiscount => self.gamma * a_plus,
        }
    }
}

/// One step of the accumulator recursion: `γ·acc_prev + I`.
pub fn pindex_step(acc_prev: f64, detected: bool, gamma: f64) -> f64 {
    gamma * acc_prev + if detected { 1.0 } else { 0.0 }
}

/// Closed-form discounted p-Index at frame `k`: `Σ γ^(k+1-τ)` over the
/// detection frames `τ ∈ [k0, k]`.
pub fn pindex_closed_form(detection_frames: &[usize], k0: usize, k: usize, gamma: f64) -> f64 {
    detection_frames
        .iter()
        .filter(|&&tau| tau >= k0 && tau <= k)
        .map(|&tau| gamma.powi((k + 1 - tau) as i32))
        .sum()
}

/// Initial accumulator of a new feature: mean of its neighbours'
/// post-increment values, or 1.0 (its own detection) without neighbours.
pub fn estimate_new_feature_pindex(neighbor_accs: &[f64]) -> f64 {
    if neighbor_accs.is_empty() {
        1.0
    } else {
        neighbor_accs.iter().sum::<f64>() / neighbor_accs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: MapPointId,
    pub position: Point3,
    pub kind: FeatureKind,
    /// Post-increment, pre-discount accumulator from the latest update.
    pub acc: f64,
    pub birth_frame: usize,
    pub permanent: bool,
    pub detected_this_frame: bool,
}

/// Points of one kind plus their spatial index.
#[derive(Debug, Clone, Default)]
pub struct KindMap {
    points: Vec<MapPoint>,
    tree: KdTree,
}

impl KindMap {
    pub fn points(&self) -> &[MapPoint] {
        &self.points
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn position_of(&self, id: MapPointId) -> Option<usize> {
        self.points.binary_search_by_key(&id, |p| p.id).ok()
    }

    pub fn get(&self, id: MapPointId) -> Option<&MapPoint> {
        self.position_of(id).map(|i| &self.points[i])
    }

    fn rebuild_index(&mut self) {
        self.tree = KdTree::build(self.points.iter().map(|p| (p.position, p.id)));
    }
}

/// A feature of the current frame together with the ids of its valid
/// correspondence neighbours (empty when it had none).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureObservation {
    pub feature: FeaturePoint,
    pub neighbors: Vec<MapPointId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsertedPoint {
    pub id: MapPointId,
    pub kind: FeatureKind,
    pub source_index: usize,
    pub pindex_estimate: f64,
}

/// What a single map update did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub frame: usize,
    pub inserted: Vec<InsertedPoint>,
    /// Removed by the persistence filter.
    pub deleted: Vec<MapPointId>,
    /// Removed by the crop radius.
    pub cropped: Vec<MapPointId>,
    /// Features dropped because a same-kind point already occupied their voxel.
    pub deduplicated: usize,
    pub became_permanent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshotRecord {
    pub id: MapPointId,
    pub kind: FeatureKind,
    pub position: Point3,
    pub acc: f64,
    /// Discounted p-Index `γ·acc`.
    pub pindex: f64,
    pub permanent: bool,
    pub birth_frame: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub frame: usize,
    pub gamma: f64,
    pub records: Vec<MapSnapshotRecord>,
}

#[derive(Debug, Clone)]
pub struct LocalFeatureMap {
    edges: KindMap,
    surfaces: KindMap,
    frame: usize,
    next_id: MapPointId,
    params: FilterParams,
}

impl LocalFeatureMap {
    pub fn new(params: FilterParams) -> Self {
        Self {
            edges: KindMap::default(),
            surfaces: KindMap::default(),
            frame: 0,
            next_id: 0,
            params,
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    /// Frame of the most recent update.
    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn kind(&self, kind: FeatureKind) -> &KindMap {
        match kind {
            FeatureKind::Edge => &self.edges,
            FeatureKind::Surface => &self.surfaces,
        }
    }

    fn kind_mut(&mut self, kind: FeatureKind) -> &mut KindMap {
        match kind {
            FeatureKind::Edge => &mut self.edges,
            FeatureKind::Surface => &mut self.surfaces,
        }
    }

    pub fn get(&self, id: MapPointId) -> Option<&MapPoint> {
        self.edges.get(id).or_else(|| self.surfaces.get(id))
    }

    /// Live `(edge, surface)` counts.
    pub fn counts(&self) -> (usize, usize) {
        (self.edges.len(), self.surfaces.len())
    }

    pub fn len(&self) -> usize {
        self.edges.len() + self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flags each listed point as detected this frame. Repeats within a
    /// frame are no-ops, so a point contributes at most one increment.
    pub fn record_detection(&mut self, neighbor_ids: &[MapPointId]) -> Result<()> {
        for &id in neighbor_ids {
            let slot = if let Some(i) = self.edges.position_of(id) {
                &mut self.edges.points[i]
            } else if let Some(i) = self.surfaces.position_of(id) {
                &mut self.surfaces.points[i]
            } else {
                return Err(Error::StaleMapPoint(id));
            };
            slot.detected_this_frame = true;
        }
        Ok(())
    }

    /// Runs the persistence filter for frame `frame` and merges the frame's
    /// features, transformed by the optimised pose `pose`.
    ///
    /// Detections must already be recorded. Neighbour ids in the
    /// observations refer to the map as it was before this call.
    pub fn pfilter_update(
        &mut self,
        frame: usize,
        edges: &[FeatureObservation],
        surfaces: &[FeatureObservation],
        pose: &Pose,
    ) -> Result<UpdateReport> {
        let mut report = UpdateReport {
            frame,
            ..Default::default()
        };
        for (kind, observations) in [(FeatureKind::Edge, edges), (FeatureKind::Surface, surfaces)] {
            self.update_kind(kind, frame, observations, pose, &mut report)?;
        }
        self.frame = frame;
        Ok(report)
    }

    fn update_kind(
        &mut self,
        kind: FeatureKind,
        frame: usize,
        observations: &[FeatureObservation],
        pose: &Pose,
        report: &mut UpdateReport,
    ) -> Result<()> {
        let params = self.params.clone();
        let gamma = params.gamma;

        // Post-increment accumulators, indexed like `points`.
        let map = self.kind_mut(kind);
        let a_plus: Vec<f64> = map
            .points
            .iter()
            .map(|p| pindex_step(p.acc, p.detected_this_frame, gamma))
            .collect();

        let mut estimates = Vec::with_capacity(observations.len());
        let mut neighbor_accs = Vec::with_capacity(5);
        for obs in observations {
            neighbor_accs.clear();
            for id in &obs.neighbors {
                let i = map.position_of(*id).ok_or(Error::StaleMapPoint(*id))?;
                neighbor_accs.push(a_plus[i]);
            }
            estimates.push(estimate_new_feature_pindex(&neighbor_accs));
        }

        // Persistence filtering of the pre-existing points.
        let mut keep = Vec::with_capacity(map.points.len());
        for (p, &a) in map.points.iter_mut().zip(&a_plus) {
            p.acc = a;
            p.detected_this_frame = false;
            let survives = if !params.enabled || p.permanent {
                true
            } else if params.compared(a) > params.theta_p {
                if params.compared(a) >= params.theta_max {
                    p.permanent = true;
                    report.became_permanent += 1;
                }
                true
            } else {
                frame.saturating_sub(p.birth_frame) < params.kappa_new
            };
            keep.push(survives);
        }
        let center = pose.translation;
        let crop2 = params.crop_radius * params.crop_radius;
        let mut it = keep.iter();
        map.points.retain(|p| {
            if *it.next().unwrap() {
                if (p.position - center).norm_squared() > crop2 {
                    report.cropped.push(p.id);
                    false
                } else {
                    true
                }
            } else {
                report.deleted.push(p.id);
                false
            }
        });

        // Insertion with voxel de-duplication against survivors and
        // earlier insertions of this frame.
        let radius = 0.5 * params.voxel(kind);
        let mut grid = DedupGrid::new(radius);
        for p in &map.points {
            grid.insert(p.position);
        }
        for (obs, estimate) in observations.iter().zip(estimates) {
            let world = pose.transform_point(&obs.feature.position);
            if grid.occupied(&world) {
                report.deduplicated += 1;
                continue;
            }
            grid.insert(world);
            let id = self.next_id;
            self.next_id += 1;
            let map = self.kind_mut(kind);
            map.points.push(MapPoint {
                id,
                position: world,
                kind,
                acc: estimate,
                birth_frame: frame,
                permanent: false,
                detected_this_frame: false,
            });
            report.inserted.push(InsertedPoint {
                id,
                kind,
                source_index: obs.feature.source_index,
                pindex_estimate: estimate,
            });
        }
        self.kind_mut(kind).rebuild_index();
        Ok(())
    }

    pub fn snapshot(&self) -> MapSnapshot {
        let gamma = self.params.gamma;
        let mut records: Vec<MapSnapshotRecord> = self
            .edges
            .points
            .iter()
            .chain(&self.surfaces.points)
            .map(|p| MapSnapshotRecord {
                id: p.id,
                kind: p.kind,
                position: p.position,
                acc: p.acc,
                pindex: gamma * p.acc,
                permanent: p.permanent,
                birth_frame: p.birth_frame,
            })
            .collect();
        records.sort_by_key(|r| r.id);
        MapSnapshot {
            frame: self.frame,
            gamma,
            records,
        }
    }
}

pub fn map_counts(map: &LocalFeatureMap) -> (usize, usize) {
    map.counts()
}

/// Hash grid answering "is any stored point within `radius`?".
struct DedupGrid {
    radius: f64,
    cells: HashMap<[i64; 3], Vec<Point3>>,
}

impl DedupGrid {
    fn new(radius: f64) -> Self {
        Self {
            radius,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: &Point3) -> [i64; 3] {
        [
            (p.x / self.radius).floor() as i64,
            (p.y / self.radius).floor() as i64,
            (p.z / self.radius).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Point3) {
        let key = self.key(&p);
        self.cells.entry(key).or_default().push(p);
    }

    fn occupied(&self, p: &Point3) -> bool {
        let [x, y, z] = self.key(p);
        let r2 = self.radius * self.radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.cells.get(&[x + dx, y + dy, z + dz]) {
                        if cell.iter().any(|q| (q - p).norm_squared() < r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn feature(kind: FeatureKind, x: f64, y: f64, z: f64) -> FeaturePoint {
        FeaturePoint {
            position: Vector3::new(x, y, z),
            rel_time: 1.0,
            kind,
            pindex_estimate: 0.0,
            ring: 0,
            source_index: 0,
        }
    }

    fn obs(f: FeaturePoint, neighbors: Vec<MapPointId>) -> FeatureObservation {
        FeatureObservation { feature: f, neighbors }
    }

    fn map_with_edges(n: usize, params: FilterParams) -> LocalFeatureMap {
        let mut map = LocalFeatureMap::new(params);
        let edges: Vec<_> = (0..n)
            .map(|i| obs(feature(FeatureKind::Edge, 5.0 * i as f64, 0.0, 0.0), vec![]))
            .collect();
        map.pfilter_update(0, &edges, &[], &Pose::identity()).unwrap();
        map
    }

    #[test]
    fn pindex_step_examples() {
        assert_eq!(pindex_step(0.0, true, 0.6), 1.0);
        assert_abs_diff_eq!(pindex_step(2.5, true, 0.6), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pindex_step(2.5, false, 0.6), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        assert_abs_diff_eq!(pindex_closed_form(&[7], 0, 7, 0.6), 0.6, epsilon = 1e-15);
        let all: Vec<usize> = (0..4).collect();
        assert_abs_diff_eq!(pindex_closed_form(&all, 0, 3, 0.6), 1.3056, epsilon = 1e-12);
        let long: Vec<usize> = (0..2000).collect();
        assert_abs_diff_eq!(pindex_closed_form(&long, 0, 1999, 0.6), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn estimate_examples() {
        assert_eq!(estimate_new_feature_pindex(&[2.0; 5]), 2.0);
        assert_eq!(estimate_new_feature_pindex(&[1.0, 2.0, 3.0, 4.0, 5.0]), 3.0);
        assert_eq!(estimate_new_feature_pindex(&[]), 1.0);
    }

    #[test]
    fn detection_is_clamped_per_frame() {
        let mut map = map_with_edges(3, FilterParams::default());
        map.record_detection(&[0, 1]).unwrap();
        map.record_detection(&[1, 0]).unwrap();
        map.pfilter_update(1, &[], &[], &Pose::identity()).unwrap();
        // Bootstrap acc = 1.0, so a detected point reaches 0.6 + 1.
        assert_abs_diff_eq!(map.get(0).unwrap().acc, 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(map.get(1).unwrap().acc, 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(map.get(2).unwrap().acc, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn stale_ids_are_rejected() {
        let mut map = map_with_edges(2, FilterParams::default());
        assert!(matches!(map.record_detection(&[99]), Err(Error::StaleMapPoint(99))));
    }

    #[test]
    fn four_consecutive_detections_make_a_point_permanent() {
        let mut map = LocalFeatureMap::new(FilterParams::default());
        map.kind_mut(FeatureKind::Edge).points.push(MapPoint {
            id: 0,
            position: Vector3::zeros(),
            kind: FeatureKind::Edge,
            acc: 0.0,
            birth_frame: 0,
            permanent: false,
            detected_this_frame: false,
        });
        map.next_id = 1;
        let expected = [1.0, 1.6, 1.96, 2.176];
        for (k, want) in expected.iter().enumerate() {
            map.record_detection(&[0]).unwrap();
            map.pfilter_update(k + 1, &[], &[], &Pose::identity()).unwrap();
            let p = map.get(0).unwrap();
            assert_abs_diff_eq!(p.acc, *want, epsilon = 1e-12);
            assert_eq!(p.permanent, k == 3, "frame {}", k + 1);
        }
        // Permanent points are never filtered again.
        for k in 5..30 {
            map.pfilter_update(k, &[], &[], &Pose::identity()).unwrap();
        }
        assert!(map.get(0).unwrap().permanent);
    }

    #[test]
    fn steady_state_point_missed_once_is_deleted() {
        let params = FilterParams {
            theta_max: f64::INFINITY,
            ..Default::default()
        };
        let mut map = LocalFeatureMap::new(params);
        map.kind_mut(FeatureKind::Surface).points.push(MapPoint {
            id: 0,
            position: Vector3::zeros(),
            kind: FeatureKind::Surface,
            acc: 2.5,
            birth_frame: 0,
            permanent: false,
            detected_this_frame: false,
        });
        map.next_id = 1;
        map.record_detection(&[0]).unwrap();
        map.pfilter_update(10, &[], &[], &Pose::identity()).unwrap();
        assert_abs_diff_eq!(map.get(0).unwrap().acc, 2.5, epsilon = 1e-12);
        let report = map.pfilter_update(11, &[], &[], &Pose::identity()).unwrap();
        assert_eq!(report.deleted, vec![0]);
        assert!(map.is_empty());
    }

    #[test]
    fn grace_window_for_fresh_points() {
        let mut map = map_with_edges(1, FilterParams::default());
        map.pfilter_update(1, &[], &[], &Pose::identity()).unwrap();
        assert_eq!(map.counts(), (1, 0));
        let report = map.pfilter_update(2, &[], &[], &Pose::identity()).unwrap();
        assert_eq!(report.deleted, vec![0]);
        assert_eq!(map.counts(), (0, 0));
    }

    #[test]
    fn new_features_inherit_neighbor_average() {
        let mut map = map_with_edges(3, FilterParams::default());
        map.record_detection(&[0, 1]).unwrap();
        let f = feature(FeatureKind::Edge, 100.0, 0.0, 0.0);
        let report = map
            .pfilter_update(1, &[obs(f, vec![0, 1, 2])], &[], &Pose::identity())
            .unwrap();
        // Neighbours reach 1.6, 1.6 and 0.6 after this frame's increments.
        assert_abs_diff_eq!(report.inserted[0].pindex_estimate, 3.8 / 3.0, epsilon = 1e-12);
        assert_eq!(report.inserted[0].id, 3);
        assert_eq!(map.get(3).unwrap().birth_frame, 1);
    }

    #[test]
    fn voxel_dedup_drops_close_features() {
        let mut map = LocalFeatureMap::new(FilterParams::default());
        let a = feature(FeatureKind::Surface, 10.0, 0.0, 0.0);
        let b = feature(FeatureKind::Surface, 10.3, 0.0, 0.0);
        let c = feature(FeatureKind::Surface, 10.5, 0.0, 0.0);
        let report = map
            .pfilter_update(0, &[], &[obs(a, vec![]), obs(b, vec![]), obs(c, vec![])], &Pose::identity())
            .unwrap();
        assert_eq!(report.deduplicated, 1);
        assert_eq!(map.counts(), (0, 2));
    }

    #[test]
    fn disabled_filter_never_deletes() {
        let params = FilterParams {
            enabled: false,
            ..Default::default()
        };
        let mut map = map_with_edges(4, params);
        for k in 1..20 {
            let report = map.pfilter_update(k, &[], &[], &Pose::identity()).unwrap();
            assert!(report.deleted.is_empty());
        }
        assert_eq!(map.counts(), (4, 0));
    }

    #[test]
    fn crop_removes_far_points_even_if_permanent() {
        let mut map = map_with_edges(3, FilterParams::default());
        for id in 0..3 {
            map.kind_mut(FeatureKind::Edge).points[id].permanent = true;
        }
        let far = Pose::from_translation(Vector3::new(-100.0, 0.0, 0.0));
        let report = map.pfilter_update(1, &[], &[], &far).unwrap();
        // Points at x = 0, 5, 10 lie 100, 105 and 110 m away.
        assert_eq!(report.cropped, vec![1, 2]);
        assert_eq!(map.counts(), (1, 0));
    }

    #[test]
    fn empty_map_counts() {
        let map = LocalFeatureMap::new(FilterParams::default());
        assert_eq!(map_counts(&map), (0, 0));
        assert!(map.snapshot().records.is_empty());
    }

    proptest! {
        #[test]
        fn recursion_matches_closed_form(
            detections in prop::collection::vec(any::<bool>(), 1..200),
            gamma in 0.1..0.9f64,
        ) {
            let mut acc = 0.0;
            let frames: Vec<usize> = detections.iter().enumerate().filter(|(_, d)| **d).map(|(i, _)| i).collect();
            for (k, &d) in detections.iter().enumerate() {
                acc = pindex_step(acc, d, gamma);
                let closed = pindex_closed_form(&frames, 0, k, gamma);
                prop_assert!((gamma * acc - closed).abs() < 1e-12);
                prop_assert!(acc <= 1.0 / (1.0 - gamma) + 1e-12);
            }
        }

        #[test]
        fn map_bookkeeping_and_grace_window(
            pattern in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 1..25),
        ) {
            // Six fixed points plus one new edge per frame; detections follow `pattern`.
            let params = FilterParams::default();
            let mut map = LocalFeatureMap::new(params.clone());
            let seed: Vec<_> = (0..6).map(|i| obs(feature(FeatureKind::Edge, 3.0 * i as f64, 0.0, 0.0), vec![])).collect();
            map.pfilter_update(0, &seed, &[], &Pose::identity()).unwrap();
            let mut permanent = std::collections::HashSet::new();
            for (k, detect) in pattern.iter().enumerate() {
                let frame = k + 1;
                let before = map.len();
                let ids: Vec<MapPointId> = map.kind(FeatureKind::Edge).points().iter().map(|p| p.id)
                    .zip(detect.iter().cycle()).filter(|(_, d)| **d).map(|(id, _)| id).collect();
                map.record_detection(&ids).unwrap();
                let newcomer = obs(feature(FeatureKind::Edge, 3.0 * (frame + 10) as f64, 7.0, 0.0), vec![]);
                let report = map.pfilter_update(frame, &[newcomer], &[], &Pose::identity()).unwrap();
                prop_assert_eq!(map.len(), before - report.deleted.len() - report.cropped.len() + report.inserted.len());
                for p in map.kind(FeatureKind::Edge).points() {
                    prop_assert!(p.permanent || p.acc <= 1.0 / (1.0 - params.gamma) + 1e-9);
                    prop_assert!(params.gamma * p.acc < params.pindex_limit() + 1e-9);
                    if !p.permanent && !ids.contains(&p.id) && p.birth_frame < frame {
                        // A non-permanent survivor of a missed frame is still in its grace window.
                        prop_assert!(frame - p.birth_frame < params.kappa_new);
                    }
                }
                for id in &permanent {
                    prop_assert!(map.get(*id).map(|p| p.permanent).unwrap_or(false));
                }
                for p in map.kind(FeatureKind::Edge).points() {
                    if p.permanent { permanent.insert(p.id); }
                }
                for id in &report.deleted {
                    prop_assert!(!permanent.contains(id));
                }
            }
        }
    }
}
