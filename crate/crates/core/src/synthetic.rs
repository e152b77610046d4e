//! Seeded synthetic skeletons and motions for tests, demos and benchmarks.
//!
//! Units are meters, y is up and the character faces +z.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kinematics::SkeletonTopology;
use crate::pose::{MotionClip, PoseSkeleton, UnitQuat};

pub const PELVIS: usize = 0;
pub const CHEST: usize = 1;
pub const L_SHOULDER: usize = 2;
pub const L_ELBOW: usize = 3;
pub const L_WRIST: usize = 4;
pub const R_SHOULDER: usize = 5;
pub const R_ELBOW: usize = 6;
pub const R_WRIST: usize = 7;
pub const L_HIP: usize = 8;
pub const L_KNEE: usize = 9;
pub const R_HIP: usize = 10;
pub const R_KNEE: usize = 11;

fn x_axis() -> Vector3<f64> {
    Vector3::x()
}

fn y_axis() -> Vector3<f64> {
    Vector3::y()
}

fn z_axis() -> Vector3<f64> {
    Vector3::z()
}

/// Twelve-joint humanoid: pelvis, chest, two three-joint arms and two legs.
pub fn humanoid() -> SkeletonTopology {
    let names = [
        "pelvis",
        "chest",
        "l_shoulder",
        "l_elbow",
        "l_wrist",
        "r_shoulder",
        "r_elbow",
        "r_wrist",
        "l_hip",
        "l_knee",
        "r_hip",
        "r_knee",
    ];
    let v = Vector3::new;
    let offsets = vec![
        v(0.0, 0.0, 0.0),
        v(0.0, 0.45, 0.0),
        v(0.18, 0.05, 0.0),
        v(0.0, -0.28, 0.0),
        v(0.0, -0.25, 0.0),
        v(-0.18, 0.05, 0.0),
        v(0.0, -0.28, 0.0),
        v(0.0, -0.25, 0.0),
        v(0.1, -0.05, 0.0),
        v(0.0, -0.42, 0.0),
        v(-0.1, -0.05, 0.0),
        v(0.0, -0.42, 0.0),
    ];
    SkeletonTopology::new(
        names.iter().map(|s| s.to_string()).collect(),
        vec![-1, 0, 1, 2, 3, 1, 5, 6, 0, 8, 0, 10],
        offsets,
    )
    .expect("humanoid topology is valid")
}

/// Gait parameters for [`walk_clip`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gait {
    pub period_frames: f64,
    pub phase: f64,
    pub hip_swing: f64,
    pub knee_bend: f64,
    pub arm_swing: f64,
    pub elbow_bend: f64,
    pub speed: f64,
    pub heading: f64,
}

impl Gait {
    pub fn random(rng: &mut impl Rng) -> Self {
        Gait {
            period_frames: rng.random_range(14.0..26.0),
            phase: rng.random_range(0.0..TAU),
            hip_swing: rng.random_range(0.25..0.55),
            knee_bend: rng.random_range(0.3..0.9),
            arm_swing: rng.random_range(0.15..0.5),
            elbow_bend: rng.random_range(0.1..0.6),
            speed: rng.random_range(0.8..1.6),
            heading: rng.random_range(-0.3..0.3),
        }
    }

    pub fn pose(&self, frame: usize, fps: f64) -> PoseSkeleton {
        let phi = TAU * frame as f64 / self.period_frames + self.phase;
        let s = phi.sin();
        let mut rotations = vec![UnitQuat::IDENTITY; 12];
        rotations[PELVIS] = UnitQuat::from_axis_angle(y_axis(), self.heading + 0.05 * s);
        rotations[CHEST] = UnitQuat::from_axis_angle(y_axis(), -0.1 * s);
        rotations[L_HIP] = UnitQuat::from_axis_angle(x_axis(), -self.hip_swing * s);
        rotations[R_HIP] = UnitQuat::from_axis_angle(x_axis(), self.hip_swing * s);
        rotations[L_KNEE] =
            UnitQuat::from_axis_angle(x_axis(), self.knee_bend * (phi + 0.5 * PI).sin().max(0.0));
        rotations[R_KNEE] =
            UnitQuat::from_axis_angle(x_axis(), self.knee_bend * (phi - 0.5 * PI).sin().max(0.0));
        rotations[L_SHOULDER] = UnitQuat::from_axis_angle(x_axis(), self.arm_swing * s)
            .mul(&UnitQuat::from_axis_angle(z_axis(), 0.1));
        rotations[R_SHOULDER] = UnitQuat::from_axis_angle(x_axis(), -self.arm_swing * s)
            .mul(&UnitQuat::from_axis_angle(z_axis(), -0.1));
        rotations[L_ELBOW] = UnitQuat::from_axis_angle(x_axis(), -self.elbow_bend);
        rotations[R_ELBOW] = UnitQuat::from_axis_angle(x_axis(), -self.elbow_bend);

        let t = frame as f64 / fps;
        let forward = Vector3::new(self.heading.sin(), 0.0, self.heading.cos());
        let root =
            forward * (self.speed * t) + Vector3::new(0.0, 0.9 + 0.02 * (2.0 * phi).cos(), 0.0);
        PoseSkeleton::new(root, rotations)
    }
}

pub fn walk_clip(name: &str, gait: &Gait, frames: usize, fps: f64) -> MotionClip {
    let poses = (0..frames).map(|f| gait.pose(f, fps)).collect();
    MotionClip::new(name, fps, poses, humanoid().fingerprint()).expect("valid synthetic clip")
}

/// `count` walking clips named `walk_000`, `walk_001`, ...
pub fn walk_references(count: usize, frames: usize, fps: f64, seed: u64) -> Vec<MotionClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let gait = Gait::random(&mut rng);
            let len = frames + rng.random_range(0..=frames / 2);
            walk_clip(&format!("walk_{i:03}"), &gait, len, fps)
        })
        .collect()
}

/// A walk whose arms sweep inward across the torso, so interpolations toward
/// it pass through self-colliding poses.
pub fn reaching_walk(name: &str, frames: usize, fps: f64, seed: u64) -> MotionClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gait = Gait::random(&mut rng);
    let poses = (0..frames)
        .map(|f| {
            let mut pose = gait.pose(f, fps);
            let sweep = 0.5 + 0.5 * (TAU * f as f64 / frames as f64).sin();
            pose.rotations[L_SHOULDER] = UnitQuat::from_axis_angle(x_axis(), -1.2)
                .mul(&UnitQuat::from_axis_angle(z_axis(), -0.6 * sweep));
            pose.rotations[R_SHOULDER] = UnitQuat::from_axis_angle(x_axis(), -1.2)
                .mul(&UnitQuat::from_axis_angle(z_axis(), 0.6 * sweep));
            pose.rotations[L_ELBOW] = UnitQuat::from_axis_angle(y_axis(), -sweep)
                .mul(&UnitQuat::from_axis_angle(x_axis(), -0.4));
            pose.rotations[R_ELBOW] = UnitQuat::from_axis_angle(y_axis(), sweep)
                .mul(&UnitQuat::from_axis_angle(x_axis(), -0.4));
            pose
        })
        .collect();
    MotionClip::new(name, fps, poses, humanoid().fingerprint()).expect("valid synthetic clip")
}

/// Random rotation with angle in `[0, max_angle]` about a uniform axis.
pub fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> UnitQuat {
    let axis = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    UnitQuat::from_axis_angle(axis, rng.random_range(0.0..=max_angle))
}

/// Self-colliding humanoid pose families: forearm across the torso, hands
/// clasped in front of the chest, and knees crossed.
pub fn colliding_pose(rng: &mut impl Rng, family: usize) -> PoseSkeleton {
    let mut pose = PoseSkeleton::rest(12);
    let jitter = |rng: &mut ChaCha8Rng| random_rotation(rng, 0.03);
    let mut local = ChaCha8Rng::seed_from_u64(rng.random());
    match family % 3 {
        0 => {
            // Left forearm folded across the spine.
            pose.rotations[L_SHOULDER] =
                UnitQuat::from_axis_angle(z_axis(), -local.random_range(0.0..0.2))
                    .mul(&jitter(&mut local));
            pose.rotations[L_ELBOW] =
                UnitQuat::from_axis_angle(z_axis(), -local.random_range(1.15..1.45))
                    .mul(&jitter(&mut local));
        }
        1 => {
            // Both arms forward and inward until the wrists overlap.
            let reach = local.random_range(1.2..1.5);
            let inward = local.random_range(0.5..0.62);
            pose.rotations[L_SHOULDER] = UnitQuat::from_axis_angle(y_axis(), -inward)
                .mul(&UnitQuat::from_axis_angle(x_axis(), -reach))
                .mul(&jitter(&mut local));
            pose.rotations[R_SHOULDER] = UnitQuat::from_axis_angle(y_axis(), inward)
                .mul(&UnitQuat::from_axis_angle(x_axis(), -reach))
                .mul(&jitter(&mut local));
        }
        _ => {
            // Thighs adducted so the knees cross.
            let add = local.random_range(0.215..0.265);
            pose.rotations[L_HIP] =
                UnitQuat::from_axis_angle(z_axis(), -add).mul(&random_rotation(&mut local, 0.01));
            pose.rotations[R_HIP] = UnitQuat::from_axis_angle(z_axis(), add)
                .mul(&UnitQuat::from_axis_angle(x_axis(), 0.03))
                .mul(&random_rotation(&mut local, 0.01));
        }
    }
    pose.root_translation = Vector3::new(0.0, 0.9, 0.0);
    pose
}
