//! Rigid-body primitives shared by the whole pipeline.
//!
//! Poses are stored as a unit quaternion plus translation and act on points
//! as `R * p + t`. Tangent vectors are ordered `[omega, v]` (rotation first);
//! `exp`/`log` use the closed-form Rodrigues formula with the usual `V`
//! matrix coupling rotation and translation.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or free vector in meters.
pub type Point3 = Vector3<f64>;

/// Below this rotation angle the exp/log coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-4;

/// Largest angle accepted by [`Pose::log`]; at exactly pi the axis sign is ambiguous.
const LOG_MAX_ANGLE: f64 = PI - 1e-9;

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Element of se(3): angular part `omega` (rad) and translational part `v` (m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Twist {
    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { omega, v }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Build from a 6-vector ordered `[omega, v]`.
    pub fn from_vector(xi: &Vector6<f64>) -> Self {
        Self {
            omega: Vector3::new(xi[0], xi[1], xi[2]),
            v: Vector3::new(xi[3], xi[4], xi[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        )
    }

    /// Component-wise scaling, used for constant-velocity interpolation.
    pub fn scale(&self, s: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&s), "scale fraction {s} outside [0, 1]");
        Self {
            omega: self.omega * s,
            v: self.v * s,
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// Free-function form of [`Twist::scale`].
pub fn scale_twist(xi: &Twist, s: f64) -> Twist {
    xi.scale(s)
}

/// Rigid transform `T = [R t; 0 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    /// Rotation about +z by `yaw` radians followed by translation `t`.
    pub fn from_yaw(yaw: f64, t: Vector3<f64>) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            t,
        )
    }

    /// Project an arbitrary 3x3 block onto SO(3) and pair it with `t`.
    pub fn from_matrix3x4(m: &Matrix3x4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let rot = Rotation3::from_matrix_eps(&r, 1e-15, 100, Rotation3::identity());
        Self::new(
            UnitQuaternion::from_rotation_matrix(&rot),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_matrix3x4(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 4>(0, 0).copy_from(&self.to_matrix3x4());
        m
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation.into_inner() * other.rotation.into_inner();
        Pose {
            rotation: UnitQuaternion::from_quaternion(q),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// Relative transform `self⁻¹ ∘ other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn rotation_angle(&self) -> f64 {
        quaternion_log(&self.rotation).norm()
    }

    /// Exponential map from se(3).
    pub fn exp(xi: &Twist) -> Pose {
        let theta = xi.omega.norm();
        let rotation = quaternion_exp(&xi.omega);
        let w = skew(&xi.omega);
        let w2 = w * w;
        let (b, c) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            (0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0)
        } else {
            let t2 = theta * theta;
            ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
        };
        let v = Matrix3::identity() + w * b + w2 * c;
        Pose {
            rotation,
            translation: v * xi.v,
        }
    }

    /// Logarithm onto se(3), principal branch only.
    pub fn log(&self) -> Result<Twist> {
        let omega = quaternion_log(&self.rotation);
        let theta = omega.norm();
        if theta > LOG_MAX_ANGLE {
            return Err(Error::LogBranch { angle: theta });
        }
        let w = skew(&omega);
        let w2 = w * w;
        let d = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
        } else {
            let half = 0.5 * theta;
            (1.0 - half * half.cos() / half.sin()) / (theta * theta)
        };
        let v_inv = Matrix3::identity() - w * 0.5 + w2 * d;
        Ok(Twist {
            omega,
            v: v_inv * self.translation,
        })
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

pub fn transform_point(t: &Pose, p: &Point3) -> Point3 {
    t.transform_point(p)
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn se3_exp(xi: &Twist) -> Pose {
    Pose::exp(xi)
}

pub fn se3_log(t: &Pose) -> Result<Twist> {
    t.log()
}

fn quaternion_exp(omega: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = omega.norm();
    let half = 0.5 * theta;
    let (w, k) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        (half.cos(), half.sin() / theta)
    };
    UnitQuaternion::from_quaternion(Quaternion::from_parts(w, omega * k))
}

/// Rotation vector of `q`, angle in `[0, pi]`.
fn quaternion_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (mut w, mut v) = (q.w, q.imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let n = v.norm();
    if n < 1e-12 {
        // sin(theta/2) ~ n: omega = 2 v / w to second order
        return v * (2.0 / w);
    }
    let theta = 2.0 * n.atan2(w);
    v * (theta / n)
}
