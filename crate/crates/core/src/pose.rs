//! Pose representation on R³ × SO(3)^J and its geodesic geometry.
//!
//! A pose is a root translation plus one unit quaternion per joint. The
//! representation carries no bone lengths, so every distance here is
//! independent of skeleton scale.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value of sin(θ) SLERP falls back to normalized lerp.
pub const SLERP_DEGENERACY: f64 = 1e-7;

/// Unit quaternion stored as (w, x, y, z).
///
/// `q` and `-q` encode the same rotation; all distance functions in this
/// module respect that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a quaternion from raw components, normalizing them.
    ///
    /// Returns `None` for a zero or non-finite input.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        // Already unit up to rounding: keep the bits so normalization is idempotent.
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Some(UnitQuat { w, x, y, z });
        }
        Some(UnitQuat {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Like [`UnitQuat::try_new`] but panics on a zero or non-finite input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::try_new(w, x, y, z).expect("quaternion must be finite and nonzero")
    }

    pub fn from_array(q: [f64; 4]) -> Option<Self> {
        Self::try_new(q[0], q[1], q[2], q[3])
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitQuat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn negated(&self) -> Self {
        UnitQuat {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn conjugate(&self) -> Self {
        UnitQuat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self ⊗ rhs` (apply `rhs` first, then `self`).
    pub fn mul(&self, rhs: &UnitQuat) -> UnitQuat {
        let (a, b) = (self, rhs);
        UnitQuat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let UnitQuat { w, x, y, z } = *self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.to_rotation_matrix() * v
    }
}

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = String;

    fn try_from(q: [f64; 4]) -> std::result::Result<Self, Self::Error> {
        UnitQuat::from_array(q).ok_or_else(|| format!("degenerate quaternion {q:?}"))
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.as_array()
    }
}

/// One frame of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSkeleton {
    pub root_translation: Vector3<f64>,
    pub rotations: Vec<UnitQuat>,
}

impl PoseSkeleton {
    pub fn new(root_translation: Vector3<f64>, rotations: Vec<UnitQuat>) -> Self {
        PoseSkeleton {
            root_translation,
            rotations,
        }
    }

    /// Identity rotations for `joints` joints at the origin.
    pub fn rest(joints: usize) -> Self {
        PoseSkeleton::new(Vector3::zeros(), vec![UnitQuat::IDENTITY; joints])
    }

    pub fn joint_count(&self) -> usize {
        self.rotations.len()
    }
}

/// Weighting between the translational and rotational parts of the pose metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub w: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { w: 1.0 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0) || !self.w.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "metric weight w must be finite and >= 0, got {}",
                self.w
            )));
        }
        Ok(())
    }
}

/// A named, fixed-rate sequence of poses over one skeleton topology.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub name: String,
    pub fps: f64,
    pub frames: Vec<PoseSkeleton>,
    /// Structural fingerprint of the topology the frames refer to.
    pub topology_ref: String,
}

impl MotionClip {
    pub fn new(
        name: impl Into<String>,
        fps: f64,
        frames: Vec<PoseSkeleton>,
        topology_ref: impl Into<String>,
    ) -> Result<Self> {
        let clip = MotionClip {
            name: name.into(),
            fps,
            frames,
            topology_ref: topology_ref.into(),
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "clip '{}': fps must be positive, got {}",
                self.name, self.fps
            )));
        }
        let first = self
            .frames
            .first()
            .ok_or(Error::EmptyInput("motion clip has no frames"))?;
        let joints = first.joint_count();
        for frame in &self.frames {
            if frame.joint_count() != joints {
                return Err(Error::DimensionMismatch {
                    context: "motion clip frame joint count",
                    expected: joints,
                    found: frame.joint_count(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, PoseSkeleton::joint_count)
    }

    /// Copy of the clip translated so that the first frame's root sits at the origin.
    pub fn root_aligned(&self) -> MotionClip {
        let origin = self
            .frames
            .first()
            .map_or_else(Vector3::zeros, |f| f.root_translation);
        let mut out = self.clone();
        for f in &mut out.frames {
            f.root_translation -= origin;
        }
        out
    }
}

/// Geodesic angle between two rotations, `2·acos(|⟨q1,q2⟩|)`, in `[0, π]`.
///
/// Evaluated as `4·atan2(‖q1 − q2‖, ‖q1 + q2‖)` after moving `q2` into the
/// hemisphere of `q1`; this equals the arccosine form for unit quaternions but
/// stays accurate for nearly identical rotations.
pub fn rotation_distance(q1: &UnitQuat, q2: &UnitQuat) -> f64 {
    let b = if q1.dot(q2) < 0.0 { q2.negated() } else { *q2 };
    let (a, b) = (q1.as_array(), b.as_array());
    let diff = (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let sum = (0..4).map(|i| (a[i] + b[i]).powi(2)).sum::<f64>().sqrt();
    4.0 * diff.atan2(sum)
}

/// Root distance plus `w` times the summed per-joint rotation distance.
pub fn pose_distance(a: &PoseSkeleton, b: &PoseSkeleton, cfg: &MetricConfig) -> Result<f64> {
    if a.joint_count() != b.joint_count() {
        return Err(Error::DimensionMismatch {
            context: "pose_distance joint count",
            expected: a.joint_count(),
            found: b.joint_count(),
        });
    }
    let translation = (a.root_translation - b.root_translation).norm();
    let rotation: f64 = a
        .rotations
        .iter()
        .zip(&b.rotations)
        .map(|(qa, qb)| rotation_distance(qa, qb))
        .sum();
    Ok(translation + cfg.w * rotation)
}

/// Shortest-arc spherical linear interpolation.
///
/// `q2` is flipped into the hemisphere of `q1` first, so the path never takes
/// the long way around.
pub fn slerp(q1: &UnitQuat, q2: &UnitQuat, tau: f64) -> UnitQuat {
    let mut target = *q2;
    let mut cos_theta = q1.dot(q2);
    if cos_theta < 0.0 {
        target = target.negated();
        cos_theta = -cos_theta;
    }
    let theta = cos_theta.clamp(-1.0, 1.0).acos();
    let sin_theta = theta.sin();
    let (k1, k2) = if sin_theta < SLERP_DEGENERACY {
        (1.0 - tau, tau)
    } else {
        (
            ((1.0 - tau) * theta).sin() / sin_theta,
            (tau * theta).sin() / sin_theta,
        )
    };
    UnitQuat::new(
        k1 * q1.w + k2 * target.w,
        k1 * q1.x + k2 * target.x,
        k1 * q1.y + k2 * target.y,
        k1 * q1.z + k2 * target.z,
    )
}

/// Point at parameter `tau` on the geodesic between two poses.
pub fn interpolate_pose(s: &PoseSkeleton, t: &PoseSkeleton, tau: f64) -> Result<PoseSkeleton> {
    if s.joint_count() != t.joint_count() {
        return Err(Error::DimensionMismatch {
            context: "interpolate_pose joint count",
            expected: s.joint_count(),
            found: t.joint_count(),
        });
    }
    if tau == 0.0 {
        return Ok(s.clone());
    }
    if tau == 1.0 {
        return Ok(t.clone());
    }
    let root = s.root_translation * (1.0 - tau) + t.root_translation * tau;
    let rotations = s
        .rotations
        .iter()
        .zip(&t.rotations)
        .map(|(a, b)| slerp(a, b, tau))
        .collect();
    Ok(PoseSkeleton::new(root, rotations))
}
