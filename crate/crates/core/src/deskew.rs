//! Constant-velocity motion prediction and intra-sweep de-skewing.
//!
//! Points are corrected to the sweep-end timestamp: a point measured at
//! relative time `s` is moved by the motion left in the sweep, i.e.
//! `exp(-(1 - s) ξ) · p`, where `ξ` is the per-sweep increment. A point at
//! `s = 1` is unchanged.

use serde::{Deserialize, Serialize};

use crate::features::FeaturePoint;
use crate::geometry::{Point3, Pose, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionState {
    /// World pose of the previous frame.
    pub last_pose: Pose,
    /// Tangent of the relative motion between the two previous frames.
    pub last_increment: Twist,
}

impl MotionState {
    pub fn new(last_pose: Pose, last_increment: Twist) -> Self {
        Self {
            last_pose,
            last_increment,
        }
    }
}

/// Constant-velocity extrapolation `last_pose ∘ exp(last_increment)`.
pub fn predict_initial_pose(state: &MotionState) -> Pose {
    state.last_pose.compose(&Pose::exp(&state.last_increment))
}

/// Transform taking a point measured at `rel_time` into the sweep-end frame.
pub fn deskew_transform(increment: &Twist, rel_time: f64) -> Pose {
    let remaining = (1.0 - rel_time).clamp(0.0, 1.0);
    Pose::exp(&increment.scale(remaining)).inverse()
}

pub fn deskew_position(position: &Point3, increment: &Twist, rel_time: f64) -> Point3 {
    deskew_transform(increment, rel_time).transform_point(position)
}

pub fn deskew_point(p: &FeaturePoint, increment: &Twist) -> FeaturePoint {
    FeaturePoint {
        position: deskew_position(&p.position, increment, p.rel_time),
        ..*p
    }
}

pub fn deskew_all(points: &mut [FeaturePoint], increment: &Twist) {
    if *increment == Twist::zero() {
        return;
    }
    for p in points {
        p.position = deskew_position(&p.position, increment, p.rel_time);
    }
}
