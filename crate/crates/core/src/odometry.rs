//! Frame-by-frame scan-to-map odometry with the persistence-filtered map.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::deskew::{deskew_all, predict_initial_pose, MotionState};
use crate::error::{Error, Result};
use crate::features::{extract_features, ExtractionConfig, FeaturePoint, FeatureSet};
use crate::geometry::{Pose, Twist};
use crate::map::{FeatureObservation, FilterParams, LocalFeatureMap, MapSnapshot, UpdateReport};
use crate::registration::{build_correspondences, solve_pose, Correspondence, SolverConfig};
use crate::scan::Scan;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub extraction: ExtractionConfig,
    pub solver: SolverConfig,
    pub filter: FilterParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.extraction.validate()?;
        self.solver.validate()?;
        self.filter.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frame_index: usize,
    /// Live map points after the update.
    pub map_point_count: usize,
    pub edge_count: usize,
    pub surface_count: usize,
    pub feature_count: usize,
    /// Valid correspondences used in the final solve.
    pub constraint_count: usize,
    pub elapsed_ms: f64,
    pub iterations: usize,
    pub inserted: usize,
    pub deleted: usize,
    pub cropped: usize,
    /// Registration failed and the pose fell back to the prediction.
    pub degenerate: bool,
}

/// Estimated world poses, one per processed frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    entries: Vec<(usize, Pose)>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_poses(poses: &[Pose]) -> Self {
        Self {
            entries: poses.iter().copied().enumerate().collect(),
        }
    }

    /// Appends a pose; frame indices must strictly increase.
    pub fn push(&mut self, frame_index: usize, pose: Pose) {
        if let Some((last, _)) = self.entries.last() {
            assert!(frame_index > *last, "frame {frame_index} after {last}");
        }
        self.entries.push((frame_index, pose));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, Pose)] {
        &self.entries
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.entries.iter().map(|(_, p)| *p).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub pose: Pose,
    pub stats: FrameStats,
    pub report: UpdateReport,
}

/// Incremental pipeline state.
#[derive(Debug, Clone)]
pub struct Odometry {
    cfg: PipelineConfig,
    map: LocalFeatureMap,
    state: Option<MotionState>,
    last_frame: Option<usize>,
}

impl Odometry {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let map = LocalFeatureMap::new(cfg.filter.clone());
        Ok(Self {
            cfg,
            map,
            state: None,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn map(&self) -> &LocalFeatureMap {
        &self.map
    }

    pub fn snapshot(&self) -> MapSnapshot {
        self.map.snapshot()
    }

    pub fn process_frame(&mut self, scan: &Scan) -> Result<FrameOutput> {
        if let Some(last) = self.last_frame {
            if scan.frame_index <= last {
                return Err(Error::Config(format!(
                    "frame {} arrived after frame {last}",
                    scan.frame_index
                )));
            }
        }
        let start = Instant::now();
        let features = extract_features(scan, &self.cfg.extraction);
        let frame = scan.frame_index;
        let mut stats = FrameStats {
            frame_index: frame,
            feature_count: features.len(),
            ..Default::default()
        };

        let (pose, report) = match self.state {
            None => {
                let pose = Pose::identity();
                let observe = |fs: &[FeaturePoint]| -> Vec<FeatureObservation> {
                    fs.iter()
                        .map(|f| FeatureObservation {
                            feature: *f,
                            neighbors: Vec::new(),
                        })
                        .collect()
                };
                let report = self
                    .map
                    .pfilter_update(frame, &observe(&features.edges), &observe(&features.surfaces), &pose)?;
                self.state = Some(MotionState::new(pose, Twist::zero()));
                (pose, report)
            }
            Some(state) => self.register_and_update(frame, &features, state, &mut stats)?,
        };

        let (edges, surfaces) = self.map.counts();
        stats.edge_count = edges;
        stats.surface_count = surfaces;
        stats.map_point_count = edges + surfaces;
        stats.inserted = report.inserted.len();
        stats.deleted = report.deleted.len();
        stats.cropped = report.cropped.len();
        stats.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        self.last_frame = Some(frame);
        Ok(FrameOutput { pose, stats, report })
    }

    fn match_all(&self, features: &FeatureSet, increment: &Twist, pose: &Pose) -> (Vec<Correspondence>, Vec<Correspondence>) {
        let mut edges = features.edges.clone();
        let mut surfaces = features.surfaces.clone();
        deskew_all(&mut edges, increment);
        deskew_all(&mut surfaces, increment);
        let solver = &self.cfg.solver;
        (
            build_correspondences(&edges, self.map.kind(crate::features::FeatureKind::Edge), pose, solver),
            build_correspondences(&surfaces, self.map.kind(crate::features::FeatureKind::Surface), pose, solver),
        )
    }

    fn register_and_update(
        &mut self,
        frame: usize,
        features: &FeatureSet,
        state: MotionState,
        stats: &mut FrameStats,
    ) -> Result<(Pose, UpdateReport)> {
        let prediction = predict_initial_pose(&state);
        let mut pose = prediction;
        let mut increment = state.last_increment;

        for _ in 0..self.cfg.solver.passes {
            let (edges, surfaces) = self.match_all(features, &increment, &pose);
            let mut all = edges;
            all.extend(surfaces);
            match solve_pose(&all, &pose, &self.cfg.solver) {
                Ok(res) => {
                    pose = res.pose;
                    stats.iterations += res.iterations;
                    stats.constraint_count = all.iter().filter(|c| c.is_valid()).count();
                    stats.degenerate = false;
                }
                Err(err @ (Error::DegenerateRegistration { .. } | Error::SingularSystem { .. })) => {
                    log::warn!("frame {frame}: {err}; keeping the predicted pose");
                    pose = prediction;
                    stats.constraint_count = 0;
                    stats.degenerate = true;
                    break;
                }
                Err(other) => return Err(other),
            }
            // The solved pose refines the intra-sweep motion used for de-skewing.
            increment = state.last_pose.between(&pose).log().unwrap_or(increment);
        }

        // Detections are counted against the correspondences at the final pose.
        let (edges, surfaces) = self.match_all(features, &increment, &pose);
        let observe = |corrs: Vec<Correspondence>| -> Vec<FeatureObservation> {
            corrs
                .into_iter()
                .map(|c| FeatureObservation {
                    feature: c.feature,
                    neighbors: if c.model.is_some() { c.neighbor_ids } else { Vec::new() },
                })
                .collect()
        };
        let edges = observe(edges);
        let surfaces = observe(surfaces);
        for obs in edges.iter().chain(&surfaces) {
            self.map.record_detection(&obs.neighbors)?;
        }
        let report = self.map.pfilter_update(frame, &edges, &surfaces, &pose)?;
        self.state = Some(MotionState::new(pose, increment));
        Ok((pose, report))
    }
}

/// Pull-based supplier of scans in frame order.
pub trait ScanSource {
    /// Next scan, or `None` when the sequence is exhausted.
    fn next_scan(&mut self) -> Result<Option<Scan>>;

    fn len_hint(&self) -> Option<usize> {
        None
    }
}

/// In-memory scan list.
#[derive(Debug, Clone, Default)]
pub struct VecSource {
    scans: std::collections::VecDeque<Scan>,
}

impl VecSource {
    pub fn new(scans: Vec<Scan>) -> Self {
        Self { scans: scans.into() }
    }
}

impl ScanSource for VecSource {
    fn next_scan(&mut self) -> Result<Option<Scan>> {
        Ok(self.scans.pop_front())
    }

    fn len_hint(&self) -> Option<usize> {
        Some(self.scans.len())
    }
}

/// Means over all frames, as in a "Mean" table row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStats {
    pub frames: usize,
    pub map_point_count: f64,
    pub constraint_count: f64,
    pub elapsed_ms: f64,
    pub iterations: f64,
    pub degenerate_frames: usize,
}

impl MeanStats {
    pub fn from_frames(stats: &[FrameStats]) -> Self {
        let n = stats.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: fn(&FrameStats) -> f64| stats.iter().map(f).sum::<f64>() / n as f64;
        Self {
            frames: n,
            map_point_count: mean(|s| s.map_point_count as f64),
            constraint_count: mean(|s| s.constraint_count as f64),
            elapsed_ms: mean(|s| s.elapsed_ms),
            iterations: mean(|s| s.iterations as f64),
            degenerate_frames: stats.iter().filter(|s| s.degenerate).count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub trajectory: Trajectory,
    pub stats: Vec<FrameStats>,
    pub snapshot: MapSnapshot,
    pub mean: MeanStats,
}

pub fn run_sequence(source: &mut dyn ScanSource, cfg: &PipelineConfig) -> Result<SequenceResult> {
    run_sequence_with(source, cfg, |_, _| Ok(()))
}

/// Like [`run_sequence`], calling `on_frame` after every processed frame.
pub fn run_sequence_with<F>(source: &mut dyn ScanSource, cfg: &PipelineConfig, mut on_frame: F) -> Result<SequenceResult>
where
    F: FnMut(&FrameOutput, &Odometry) -> Result<()>,
{
    let mut odom = Odometry::new(cfg.clone())?;
    let mut trajectory = Trajectory::new();
    let mut stats = Vec::new();
    while let Some(scan) = source.next_scan()? {
        let out = odom.process_frame(&scan)?;
        trajectory.push(scan.frame_index, out.pose);
        stats.push(out.stats);
        on_frame(&out, &odom)?;
    }
    if trajectory.is_empty() {
        return Err(Error::EmptySource);
    }
    Ok(SequenceResult {
        trajectory,
        mean: MeanStats::from_frames(&stats),
        stats,
        snapshot: odom.snapshot(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_source_is_an_error() {
        let mut src = VecSource::new(vec![]);
        assert!(matches!(
            run_sequence(&mut src, &PipelineConfig::default()),
            Err(Error::EmptySource)
        ));
    }

    #[test]
    fn mean_stats_average_frames() {
        let frames = [
            FrameStats {
                map_point_count: 10,
                constraint_count: 4,
                elapsed_ms: 2.0,
                ..Default::default()
            },
            FrameStats {
                map_point_count: 20,
                constraint_count: 6,
                elapsed_ms: 4.0,
                degenerate: true,
                ..Default::default()
            },
        ];
        let m = MeanStats::from_frames(&frames);
        assert_eq!(m.map_point_count, 15.0);
        assert_eq!(m.constraint_count, 5.0);
        assert_eq!(m.elapsed_ms, 3.0);
        assert_eq!(m.degenerate_frames, 1);
    }

    #[test]
    #[should_panic]
    fn trajectory_rejects_repeated_frames() {
        let mut t = Trajectory::new();
        t.push(1, Pose::identity());
        t.push(1, Pose::identity());
    }

    #[test]
    fn out_of_order_scans_are_rejected() {
        let mut odom = Odometry::new(PipelineConfig::default()).unwrap();
        odom.process_frame(&Scan::new(3, 1, vec![])).unwrap();
        assert!(odom.process_frame(&Scan::new(2, 1, vec![])).is_err());
    }
}
