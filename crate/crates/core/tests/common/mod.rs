#![allow(dead_code)]

use std::collections::HashMap;

use pfilter_core::io::kitti_ate;
use pfilter_core::kdtree::KdTree;
use pfilter_core::map::MapPointId;
use pfilter_core::synth::{render_with_poses, sweep_pose, PointClass, PointLabel};
use pfilter_core::*;

/// One pipeline's outcome on a synthetic sequence.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub poses: Vec<Pose>,
    pub mean: MeanStats,
    pub ate_percent: f64,
    pub final_error: f64,
}

/// Runs several pipelines over the same rendered frames, so timing and
/// accuracy comparisons see identical inputs and identical machine load.
pub fn lockstep(spec: &SceneSpec, cfgs: &[PipelineConfig]) -> Vec<RunSummary> {
    let gt = spec.ground_truth();
    let mut odos: Vec<Odometry> = cfgs.iter().map(|c| Odometry::new(c.clone()).unwrap()).collect();
    let mut poses = vec![Vec::new(); cfgs.len()];
    let mut stats = vec![Vec::new(); cfgs.len()];
    for k in 0..gt.len() {
        let scan = render_with_poses(spec, &gt, k).scan;
        for (i, odo) in odos.iter_mut().enumerate() {
            let out = odo.process_frame(&scan).unwrap();
            poses[i].push(out.pose);
            stats[i].push(out.stats);
        }
    }
    let truth = relative_to_first(&gt);
    poses
        .into_iter()
        .zip(stats)
        .map(|(p, s)| {
            let ate = kitti_ate(&p, &truth).unwrap();
            let final_error = (p.last().unwrap().translation - truth.last().unwrap().translation).norm();
            RunSummary {
                ate_percent: ate.ate_percent.expect("synthetic runs cover at least 100 m"),
                final_error,
                mean: MeanStats::from_frames(&s),
                poses: p,
            }
        })
        .collect()
}

pub fn relative_to_first(poses: &[Pose]) -> Vec<Pose> {
    let inv = poses[0].inverse();
    poses.iter().map(|p| inv.compose(p)).collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fate of every map point the pipeline ever inserted, by source class.
#[derive(Debug, Clone, Default)]
pub struct PersistenceAudit {
    pub moving_total: usize,
    pub moving_removed: usize,
    pub noise_total: usize,
    pub noise_removed: usize,
    /// Static points whose surface patch the sensor sampled in every frame
    /// from insertion to the end of the run.
    pub visible_static_total: usize,
    pub visible_static_kept: usize,
    pub static_total: usize,
    pub static_kept: usize,
}

impl PersistenceAudit {
    pub fn moving_removed_fraction(&self) -> f64 {
        self.moving_removed as f64 / self.moving_total.max(1) as f64
    }
    pub fn noise_removed_fraction(&self) -> f64 {
        self.noise_removed as f64 / self.noise_total.max(1) as f64
    }
    pub fn visible_static_kept_fraction(&self) -> f64 {
        self.visible_static_kept as f64 / self.visible_static_total.max(1) as f64
    }
}

struct Tracked {
    label: PointLabel,
    kind: FeatureKind,
    /// True world position of the source return.
    world: Point3,
    born: usize,
    visible: bool,
}

/// Runs one pipeline and classifies every inserted map point by the
/// renderer's label for the return it came from.
///
/// A static point counts as continuously visible when, in every later
/// frame, the scan holds a return from the same primitive within half a
/// voxel of the point's true position. Points still inside their grace
/// window at the end are left out, since nothing can delete them yet.
pub fn persistence_audit(spec: &SceneSpec, cfg: &PipelineConfig) -> PersistenceAudit {
    let gt = spec.ground_truth();
    let mut odo = Odometry::new(cfg.clone()).unwrap();
    let mut tracked: HashMap<MapPointId, Tracked> = HashMap::new();
    for k in 0..gt.len() {
        let ls = render_with_poses(spec, &gt, k);
        let world: Vec<Point3> = ls
            .scan
            .points
            .iter()
            .map(|p| sweep_pose(spec, &gt, k, p.rel_time).transform_point(&p.position))
            .collect();

        // Visibility of already tracked static points in this frame.
        let statics = KdTree::build(
            world
                .iter()
                .zip(&ls.labels)
                .enumerate()
                .filter(|(_, (_, l))| l.class == PointClass::StaticLandmark)
                .map(|(i, (p, _))| (*p, i as u64)),
        );
        for t in tracked.values_mut() {
            if !t.visible || t.label.class != PointClass::StaticLandmark {
                continue;
            }
            let radius = 0.5 * cfg.filter.voxel(t.kind);
            t.visible = statics.knn(&t.world, 8).iter().any(|n| {
                n.dist2 <= radius * radius && ls.labels[n.id as usize].primitive == t.label.primitive
            });
        }

        let out = odo.process_frame(&ls.scan).unwrap();
        for ins in &out.report.inserted {
            tracked.insert(
                ins.id,
                Tracked {
                    label: ls.labels[ins.source_index],
                    kind: ins.kind,
                    world: world[ins.source_index],
                    born: k,
                    visible: true,
                },
            );
        }
    }

    let last = gt.len() - 1;
    let live: std::collections::HashSet<MapPointId> = odo.snapshot().records.iter().map(|r| r.id).collect();
    let mut audit = PersistenceAudit::default();
    for (id, t) in &tracked {
        let kept = live.contains(id);
        match t.label.class {
            PointClass::MovingObject => {
                audit.moving_total += 1;
                audit.moving_removed += usize::from(!kept);
            }
            PointClass::TransientNoise => {
                audit.noise_total += 1;
                audit.noise_removed += usize::from(!kept);
            }
            PointClass::StaticLandmark => {
                audit.static_total += 1;
                audit.static_kept += usize::from(kept);
                if t.visible && last - t.born >= cfg.filter.kappa_new {
                    audit.visible_static_total += 1;
                    audit.visible_static_kept += usize::from(kept);
                }
            }
        }
    }
    audit
}

/// Street scene with traffic and 20% spurious returns.
pub fn traffic_scene(seed: u64) -> SceneSpec {
    SceneSpec::town(&pfilter_core::synth::TownOptions {
        moving_objects: true,
        transient_fraction: 0.2,
        range_sigma: 0.01,
        seed,
        layout_seed: 7 + seed,
        ..Default::default()
    })
}

/// The same streets without traffic or spurious returns.
pub fn quiet_scene(seed: u64) -> SceneSpec {
    SceneSpec::town(&pfilter_core::synth::TownOptions {
        range_sigma: 0.01,
        seed,
        layout_seed: 7 + seed,
        ..Default::default()
    })
}

pub fn pipeline(method: ExtractionMethod, pfilter: bool) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.extraction.method = method;
    cfg.filter.enabled = pfilter;
    cfg
}
