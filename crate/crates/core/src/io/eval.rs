//! KITTI-style relative translational error.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::odometry::MeanStats;

/// Subsequence lengths in meters.
pub const EVAL_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
/// Start frames are sampled every this many frames.
pub const EVAL_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthError {
    pub length: f64,
    /// Mean translational error in percent; `None` when no subsequence fits.
    pub translation_percent: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One entry per length in [`EVAL_LENGTHS`].
    pub per_length: Vec<LengthError>,
    /// Mean over all sampled subsequences, `None` when the ground truth is
    /// shorter than the shortest length.
    pub ate_percent: Option<f64>,
    pub frames: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_stats: Option<MeanStats>,
}

impl EvalReport {
    pub fn is_sufficient(&self) -> bool {
        self.ate_percent.is_some()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames\t{}", self.frames)?;
        for l in &self.per_length {
            match l.translation_percent {
                Some(e) => writeln!(f, "{:.0}m\t{:.4}%\t({} samples)", l.length, e, l.samples)?,
                None => writeln!(f, "{:.0}m\t-", l.length)?,
            }
        }
        match self.ate_percent {
            Some(a) => write!(f, "ATE\t{a:.4}%"),
            None => write!(f, "ATE\tinsufficient length"),
        }
    }
}

/// Cumulative path length along `poses`.
pub fn trajectory_distances(poses: &[Pose]) -> Vec<f64> {
    let mut out = Vec::with_capacity(poses.len());
    let mut d = 0.0;
    for (i, p) in poses.iter().enumerate() {
        if i > 0 {
            d += (p.translation - poses[i - 1].translation).norm();
        }
        out.push(d);
    }
    out
}

/// First frame whose path distance reaches `dist[first] + length`.
fn last_frame_from_segment_length(dist: &[f64], first: usize, length: f64) -> Option<usize> {
    (first..dist.len()).find(|&i| dist[i] >= dist[first] + length)
}

pub fn kitti_ate(estimate: &[Pose], truth: &[Pose]) -> Result<EvalReport> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            estimate: estimate.len(),
            truth: truth.len(),
        });
    }
    if truth.len() < 2 {
        return Err(Error::TooFewPoses { got: truth.len() });
    }
    let dist = trajectory_distances(truth);
    let mut sums = [0.0; EVAL_LENGTHS.len()];
    let mut counts = [0usize; EVAL_LENGTHS.len()];
    for first in (0..truth.len()).step_by(EVAL_STRIDE) {
        for (li, &len) in EVAL_LENGTHS.iter().enumerate() {
            let Some(last) = last_frame_from_segment_length(&dist, first, len) else {
                continue;
            };
            let gt = truth[first].between(&truth[last]);
            let est = estimate[first].between(&estimate[last]);
            let err = gt.between(&est);
            sums[li] += err.translation.norm() / len;
            counts[li] += 1;
        }
    }
    let per_length = EVAL_LENGTHS
        .iter()
        .enumerate()
        .map(|(i, &length)| LengthError {
            length,
            translation_percent: (counts[i] > 0).then(|| 100.0 * sums[i] / counts[i] as f64),
            samples: counts[i],
        })
        .collect();
    let total: usize = counts.iter().sum();
    let ate_percent = (total > 0).then(|| 100.0 * sums.iter().sum::<f64>() / total as f64);
    Ok(EvalReport {
        per_length,
        ate_percent,
        frames: truth.len(),
        mean_stats: None,
    })
}
