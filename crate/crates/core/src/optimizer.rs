//! Collision-free pose optimization by Riemannian gradient descent on the
//! unit-quaternion sphere of every joint.
//!
//! Each step evaluates the collision energy, projects the Euclidean gradient
//! of every joint quaternion onto the tangent space (`g − (q·g) q`), takes a
//! fixed step and renormalizes. The root translation is never changed.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionModel;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_raw, rotation_partials};
use crate::pose::{PoseSkeleton, UnitQuat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Chain rule through forward kinematics and both energies.
    Analytic,
    /// Central differences on each quaternion component.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop as soon as the total energy drops below this value.
    pub energy_stop: f64,
    pub gradient_mode: GradientMode,
    pub fd_step: f64,
    /// Halve the step until the energy does not increase. Off by default.
    pub backtracking: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.05,
            max_steps: 120,
            energy_stop: 1e-6,
            gradient_mode: GradientMode::FiniteDifference,
            fd_step: 1e-6,
            backtracking: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        if !(self.energy_stop >= 0.0) {
            return Err(Error::InvalidConfig("energy_stop must be >= 0".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidConfig("fd_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub steps_taken: usize,
    /// Energy before the first step followed by the energy after each step.
    pub energy_history: Vec<f64>,
    pub converged_early: bool,
    /// Largest `| ‖q‖ − 1 |` seen over all joints after any step.
    pub max_norm_deviation: f64,
}

fn raw_quats(pose: &PoseSkeleton) -> Vec<[f64; 4]> {
    pose.rotations.iter().map(UnitQuat::as_array).collect()
}

fn energy_raw(model: &CollisionModel, root: &Vector3<f64>, quats: &[[f64; 4]]) -> Result<f64> {
    let fk = forward_kinematics_raw(&model.topology, root, quats)?;
    Ok(model.energy_at(&fk.positions)?.total)
}

/// Gradient of the total collision energy with respect to every raw
/// quaternion component `(w, x, y, z)` of every joint.
pub fn energy_gradient(
    pose: &PoseSkeleton,
    model: &CollisionModel,
    mode: GradientMode,
    fd_step: f64,
) -> Result<Vec<[f64; 4]>> {
    let quats = raw_quats(pose);
    match mode {
        GradientMode::Analytic => analytic_gradient(model, &pose.root_translation, &quats),
        GradientMode::FiniteDifference => {
            fd_gradient(model, &pose.root_translation, &quats, fd_step)
        }
    }
}

fn fd_gradient(
    model: &CollisionModel,
    root: &Vector3<f64>,
    quats: &[[f64; 4]],
    h: f64,
) -> Result<Vec<[f64; 4]>> {
    let mut grad = vec![[0.0; 4]; quats.len()];
    let mut work = quats.to_vec();
    for j in 0..quats.len() {
        for c in 0..4 {
            let orig = work[j][c];
            work[j][c] = orig + h;
            let plus = energy_raw(model, root, &work)?;
            work[j][c] = orig - h;
            let minus = energy_raw(model, root, &work)?;
            work[j][c] = orig;
            grad[j][c] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

fn analytic_gradient(
    model: &CollisionModel,
    root: &Vector3<f64>,
    quats: &[[f64; 4]],
) -> Result<Vec<[f64; 4]>> {
    let top = &model.topology;
    let fk = forward_kinematics_raw(top, root, quats)?;
    let (_, gx) = model.position_gradient(&fk.positions);
    let x = &fk.positions;
    let g = &fk.orientations;

    // A_k = Σ_{j below k} g_j (x_j − x_k)ᵀ
    let j_count = top.joint_count();
    let mut acc = vec![Matrix3::<f64>::zeros(); j_count];
    for j in 0..j_count {
        if gx[j] == Vector3::zeros() {
            continue;
        }
        let mut anc = top.parent(j);
        while let Some(k) = anc {
            acc[k] += gx[j] * (x[j] - x[k]).transpose();
            anc = top.parent(k);
        }
    }

    let mut grad = vec![[0.0; 4]; j_count];
    for k in 0..j_count {
        if acc[k] == Matrix3::zeros() {
            continue;
        }
        // x_j = x_k + G_parent · R_k · y_j with y_j = G_kᵀ (x_j − x_k).
        let parent_rot = top.parent(k).map_or_else(Matrix3::identity, |p| g[p]);
        let m = parent_rot.transpose() * acc[k] * g[k];
        let partials = rotation_partials(&quats[k]);
        for c in 0..4 {
            grad[k][c] = partials[c].component_mul(&m).sum();
        }
    }
    Ok(grad)
}

fn tangent_step(q: &[f64; 4], g: &[f64; 4], lr: f64) -> [f64; 4] {
    let qg: f64 = (0..4).map(|c| q[c] * g[c]).sum();
    let mut out = [0.0; 4];
    for c in 0..4 {
        out[c] = q[c] - lr * (g[c] - qg * q[c]);
    }
    let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.map(|v| v / n)
}

fn norm_deviation(quats: &[[f64; 4]]) -> f64 {
    quats
        .iter()
        .map(|q| (q.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Minimizes the collision energy over joint rotations.
pub fn optimize_pose(
    pose: &PoseSkeleton,
    model: &CollisionModel,
    cfg: &OptimizerConfig,
) -> Result<(PoseSkeleton, OptimizationTrace)> {
    cfg.validate()?;
    let root = pose.root_translation;
    let mut quats = raw_quats(pose);
    let mut energy = energy_raw(model, &root, &quats)?;
    let mut trace = OptimizationTrace {
        initial_energy: energy,
        final_energy: energy,
        steps_taken: 0,
        energy_history: vec![energy],
        converged_early: false,
        max_norm_deviation: norm_deviation(&quats),
    };
    if !energy.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            trace: Box::new(trace),
        });
    }

    for step in 0..cfg.max_steps {
        if energy < cfg.energy_stop {
            trace.converged_early = true;
            break;
        }
        let grad = match cfg.gradient_mode {
            GradientMode::Analytic => analytic_gradient(model, &root, &quats)?,
            GradientMode::FiniteDifference => fd_gradient(model, &root, &quats, cfg.fd_step)?,
        };
        if grad.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step,
                trace: Box::new(trace),
            });
        }

        let mut lr = cfg.learning_rate;
        let (next, next_energy) = loop {
            let candidate: Vec<[f64; 4]> = quats
                .iter()
                .zip(&grad)
                .map(|(q, g)| tangent_step(q, g, lr))
                .collect();
            let e = energy_raw(model, &root, &candidate)?;
            if !cfg.backtracking || e <= energy || lr < cfg.learning_rate * 1e-6 {
                break (candidate, e);
            }
            lr *= 0.5;
        };
        quats = next;
        energy = next_energy;
        trace.steps_taken += 1;
        trace.energy_history.push(energy);
        trace.final_energy = energy;
        trace.max_norm_deviation = trace.max_norm_deviation.max(norm_deviation(&quats));
        if !energy.is_finite() {
            return Err(Error::Divergence {
                step: step + 1,
                trace: Box::new(trace),
            });
        }
    }

    let rotations = quats
        .iter()
        .map(|q| UnitQuat::from_array(*q).expect("normalized quaternion"))
        .collect();
    Ok((PoseSkeleton::new(root, rotations), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::SkeletonTopology;

    fn arm_model() -> CollisionModel {
        // Spine with an arm on one side and a leg on the other.
        let top = SkeletonTopology::new(
            vec!["root", "spine", "shoulder", "elbow", "hand", "hip", "knee"]
                .into_iter()
                .map(String::from)
                .collect(),
            vec![-1, 0, 1, 2, 3, 0, 5],
            vec![
                Vector3::zeros(),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.4, 0.0, 0.0),
                Vector3::new(0.0, -0.6, 0.0),
                Vector3::new(0.0, -0.6, 0.0),
                Vector3::new(-0.3, -0.2, 0.0),
                Vector3::new(0.0, -0.8, 0.0),
            ],
        )
        .unwrap();
        CollisionModel::new(top, 0.1, 1.0).unwrap()
    }

    fn colliding_pose() -> PoseSkeleton {
        let mut pose = PoseSkeleton::rest(7);
        // Forearm folded inward across the spine bone.
        pose.rotations[3] = UnitQuat::from_axis_angle(Vector3::new(0.0, 0.0, 1.0), -1.2);
        pose.rotations[1] = UnitQuat::from_axis_angle(Vector3::new(1.0, 0.0, 0.0), 0.03);
        pose
    }

    #[test]
    fn collision_free_pose_has_zero_gradient() {
        let model = arm_model();
        let pose = PoseSkeleton::rest(7);
        assert_eq!(model.energy(&pose).unwrap().total, 0.0);
        for mode in [GradientMode::Analytic, GradientMode::FiniteDifference] {
            let g = energy_gradient(&pose, &model, mode, 1e-6).unwrap();
            assert!(g.iter().flatten().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let model = arm_model();
        let pose = colliding_pose();
        assert!(model.energy(&pose).unwrap().total > 0.0);
        let a = energy_gradient(&pose, &model, GradientMode::Analytic, 1e-6).unwrap();
        let f = energy_gradient(&pose, &model, GradientMode::FiniteDifference, 1e-6).unwrap();
        for (ga, gf) in a.iter().flatten().zip(f.iter().flatten()) {
            assert!(
                (ga - gf).abs() <= (1e-3 * ga.abs().max(gf.abs())).max(1e-8),
                "{ga} vs {gf}"
            );
        }
    }

    #[test]
    fn gradient_step_reduces_energy() {
        let model = arm_model();
        let pose = colliding_pose();
        let e0 = model.energy(&pose).unwrap().total;
        let g = energy_gradient(&pose, &model, GradientMode::Analytic, 1e-6).unwrap();
        let stepped: Vec<UnitQuat> = pose
            .rotations
            .iter()
            .zip(&g)
            .map(|(q, gj)| UnitQuat::from_array(tangent_step(&q.as_array(), gj, 0.05)).unwrap())
            .collect();
        let e1 = model
            .energy(&PoseSkeleton::new(pose.root_translation, stepped))
            .unwrap()
            .total;
        assert!(e1 < e0);
    }

    #[test]
    fn zero_energy_input_is_returned_unchanged() {
        let model = arm_model();
        let pose = PoseSkeleton::rest(7);
        let (out, trace) = optimize_pose(&pose, &model, &OptimizerConfig::default()).unwrap();
        assert_eq!(out, pose);
        assert!(trace.converged_early);
        assert!(trace.steps_taken <= 1);
        assert_eq!(trace.final_energy, *trace.energy_history.last().unwrap());
    }

    #[test]
    fn optimizer_resolves_folded_arm() {
        let model = arm_model();
        let pose = colliding_pose();
        for mode in [GradientMode::Analytic, GradientMode::FiniteDifference] {
            let cfg = OptimizerConfig {
                gradient_mode: mode,
                ..OptimizerConfig::default()
            };
            let (out, trace) = optimize_pose(&pose, &model, &cfg).unwrap();
            assert!(trace.initial_energy > 0.0);
            assert!(
                trace.final_energy < 1e-6 || trace.final_energy < 0.01 * trace.initial_energy,
                "{trace:?}"
            );
            assert!(trace.max_norm_deviation < 1e-9);
            assert_eq!(out.root_translation, pose.root_translation);
            assert_eq!(trace.final_energy, *trace.energy_history.last().unwrap());
            assert!(trace.steps_taken <= 120);
        }
    }

    #[test]
    fn optimization_is_deterministic() {
        let model = arm_model();
        let pose = colliding_pose();
        let cfg = OptimizerConfig {
            gradient_mode: GradientMode::Analytic,
            ..OptimizerConfig::default()
        };
        let a = optimize_pose(&pose, &model, &cfg).unwrap();
        let b = optimize_pose(&pose, &model, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backtracking_never_increases_energy() {
        let model = arm_model();
        let cfg = OptimizerConfig {
            learning_rate: 5.0,
            backtracking: true,
            gradient_mode: GradientMode::Analytic,
            ..OptimizerConfig::default()
        };
        let (_, trace) = optimize_pose(&colliding_pose(), &model, &cfg).unwrap();
        for w in trace.energy_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let cfg = OptimizerConfig {
            learning_rate: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(optimize_pose(&PoseSkeleton::rest(7), &arm_model(), &cfg).is_err());
    }
}
