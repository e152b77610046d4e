//! Self-collision penetration energies for a posed skeleton.
//!
//! Joints are spheres and bones are capsules whose radius is the parent
//! joint's sphere radius. Penetration is measured as a squared hinge of
//! `r_i + r_j − distance` over every primitive pair not excluded by the
//! topology masks.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{compute_radii, forward_kinematics, JointRadii, SkeletonTopology};
use crate::pose::PoseSkeleton;

/// Below `PARALLEL_EPS · |u|²|v|²` the determinant is treated as zero.
pub const PARALLEL_EPS: f64 = 1e-9;
/// Squared length under which a segment is treated as a point.
const DEGENERATE_SQ: f64 = 1e-24;

/// Default weight of the capsule term in the total energy.
pub const DEFAULT_LAMBDA_CAPSULE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPointResult {
    /// Parameter of the closest point on the first segment.
    pub s: f64,
    /// Parameter of the closest point on the second segment.
    pub t: f64,
    pub distance: f64,
}

/// Minimum distance between the closed segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> ClosestPointResult {
    let u = q1 - p1;
    let v = q2 - p2;
    let w0 = p1 - p2;
    let a = u.dot(&u);
    let b = u.dot(&v);
    let c = v.dot(&v);
    let d = u.dot(&w0);
    let e = v.dot(&w0);

    let (s, t) = if a <= DEGENERATE_SQ && c <= DEGENERATE_SQ {
        (0.0, 0.0)
    } else if a <= DEGENERATE_SQ {
        (0.0, clamp01(e / c))
    } else if c <= DEGENERATE_SQ {
        (clamp01(-d / a), 0.0)
    } else {
        let det = a * c - b * b;
        // Parallel lines: any s works, start from the first endpoint.
        let s = if det > PARALLEL_EPS * a * c {
            clamp01((b * e - c * d) / det)
        } else {
            0.0
        };
        let t = (b * s + e) / c;
        if t < 0.0 {
            (clamp01(-d / a), 0.0)
        } else if t > 1.0 {
            (clamp01((b - d) / a), 1.0)
        } else {
            (s, t)
        }
    };
    let diff = w0 + u * s - v * t;
    ClosestPointResult {
        s,
        t,
        distance: diff.norm(),
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Primitive pairs excluded from the energies, precomputed per topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionMasks {
    /// Joint pairs `(i, j)`, `i < j`, related as parent/child or grandparent/grandchild.
    pub sphere_pairs_excluded: BTreeSet<(usize, usize)>,
    /// Bone index pairs `(a, b)`, `a < b`, whose bones share a joint.
    pub capsule_pairs_excluded: BTreeSet<(usize, usize)>,
    /// Bones as `(parent, child)`; bone indices refer to this list.
    pub bones: Vec<(usize, usize)>,
    sphere_active: Vec<(usize, usize)>,
    capsule_active: Vec<(usize, usize)>,
}

impl ExclusionMasks {
    pub fn new(topology: &SkeletonTopology) -> Self {
        let j = topology.joint_count();
        let grandparent = |i: usize| topology.parent(i).and_then(|p| topology.parent(p));
        let related = |i: usize, k: usize| {
            topology.parent(i) == Some(k)
                || topology.parent(k) == Some(i)
                || grandparent(i) == Some(k)
                || grandparent(k) == Some(i)
        };
        let mut sphere_pairs_excluded = BTreeSet::new();
        let mut sphere_active = Vec::new();
        for i in 0..j {
            for k in i + 1..j {
                if related(i, k) {
                    sphere_pairs_excluded.insert((i, k));
                } else {
                    sphere_active.push((i, k));
                }
            }
        }

        let bones = topology.bones();
        let mut capsule_pairs_excluded = BTreeSet::new();
        let mut capsule_active = Vec::new();
        for a in 0..bones.len() {
            for b in a + 1..bones.len() {
                let (pa, ca) = bones[a];
                let (pb, cb) = bones[b];
                if pa == pb || pa == cb || ca == pb || ca == cb {
                    capsule_pairs_excluded.insert((a, b));
                } else {
                    capsule_active.push((a, b));
                }
            }
        }
        ExclusionMasks {
            sphere_pairs_excluded,
            capsule_pairs_excluded,
            bones,
            sphere_active,
            capsule_active,
        }
    }

    /// Joint pairs that contribute to the sphere energy, in a fixed order.
    pub fn sphere_pairs(&self) -> &[(usize, usize)] {
        &self.sphere_active
    }

    /// Bone pairs that contribute to the capsule energy, in a fixed order.
    pub fn capsule_pairs(&self) -> &[(usize, usize)] {
        &self.capsule_active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub sphere_energy: f64,
    pub capsule_energy: f64,
    pub total: f64,
    pub lambda_capsule: f64,
}

impl EnergyReport {
    fn new(sphere_energy: f64, capsule_energy: f64, lambda_capsule: f64) -> Self {
        EnergyReport {
            sphere_energy,
            capsule_energy,
            total: sphere_energy + lambda_capsule * capsule_energy,
            lambda_capsule,
        }
    }
}

fn check_shapes(positions: &[Vector3<f64>], radii: &JointRadii) -> Result<()> {
    if positions.len() != radii.radii.len() {
        return Err(Error::DimensionMismatch {
            context: "positions vs radii",
            expected: positions.len(),
            found: radii.radii.len(),
        });
    }
    Ok(())
}

/// Σ max(0, r_i + r_j − ‖x_i − x_j‖)² over the unmasked joint pairs.
pub fn sphere_energy(
    positions: &[Vector3<f64>],
    radii: &JointRadii,
    masks: &ExclusionMasks,
) -> Result<f64> {
    check_shapes(positions, radii)?;
    let r = &radii.radii;
    Ok(masks
        .sphere_pairs()
        .iter()
        .map(|&(i, j)| {
            let pen = r[i] + r[j] - (positions[i] - positions[j]).norm();
            if pen > 0.0 {
                pen * pen
            } else {
                0.0
            }
        })
        .sum())
}

/// Σ max(0, r_a + r_b − d_ab)² over the unmasked bone pairs.
pub fn capsule_energy(
    positions: &[Vector3<f64>],
    topology: &SkeletonTopology,
    radii: &JointRadii,
    masks: &ExclusionMasks,
) -> Result<f64> {
    check_shapes(positions, radii)?;
    if positions.len() != topology.joint_count() {
        return Err(Error::DimensionMismatch {
            context: "positions vs topology",
            expected: topology.joint_count(),
            found: positions.len(),
        });
    }
    let r = &radii.radii;
    Ok(masks
        .capsule_pairs()
        .iter()
        .map(|&(a, b)| {
            let (pa, ca) = masks.bones[a];
            let (pb, cb) = masks.bones[b];
            let d = segment_distance(
                &positions[pa],
                &positions[ca],
                &positions[pb],
                &positions[cb],
            );
            let pen = r[pa] + r[pb] - d.distance;
            if pen > 0.0 {
                pen * pen
            } else {
                0.0
            }
        })
        .sum())
}

/// Runs forward kinematics on `pose` and evaluates both energies.
pub fn total_energy(
    pose: &PoseSkeleton,
    topology: &SkeletonTopology,
    rho: f64,
    masks: &ExclusionMasks,
    lambda_capsule: f64,
) -> Result<EnergyReport> {
    let positions = forward_kinematics(topology, pose)?;
    let radii = compute_radii(topology, &positions, rho);
    let sphere = sphere_energy(&positions, &radii, masks)?;
    let capsule = capsule_energy(&positions, topology, &radii, masks)?;
    Ok(EnergyReport::new(sphere, capsule, lambda_capsule))
}

/// A topology together with its masks and energy parameters.
#[derive(Debug, Clone)]
pub struct CollisionModel {
    pub topology: SkeletonTopology,
    pub masks: ExclusionMasks,
    pub rho: f64,
    pub lambda_capsule: f64,
}

impl CollisionModel {
    pub fn new(topology: SkeletonTopology, rho: f64, lambda_capsule: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rho must be positive, got {rho}"
            )));
        }
        if !(lambda_capsule >= 0.0) || !lambda_capsule.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda_capsule must be >= 0, got {lambda_capsule}"
            )));
        }
        let masks = ExclusionMasks::new(&topology);
        Ok(CollisionModel {
            topology,
            masks,
            rho,
            lambda_capsule,
        })
    }

    pub fn energy(&self, pose: &PoseSkeleton) -> Result<EnergyReport> {
        total_energy(
            pose,
            &self.topology,
            self.rho,
            &self.masks,
            self.lambda_capsule,
        )
    }

    /// Energies at given world positions (radii recomputed from them).
    pub fn energy_at(&self, positions: &[Vector3<f64>]) -> Result<EnergyReport> {
        let radii = compute_radii(&self.topology, positions, self.rho);
        let sphere = sphere_energy(positions, &radii, &self.masks)?;
        let capsule = capsule_energy(positions, &self.topology, &radii, &self.masks)?;
        Ok(EnergyReport::new(sphere, capsule, self.lambda_capsule))
    }

    /// Total energy and its gradient with respect to every joint position.
    ///
    /// Radii are differentiated as functions of the positions. Pairs sitting
    /// exactly on the hinge contribute nothing.
    pub fn position_gradient(&self, positions: &[Vector3<f64>]) -> (f64, Vec<Vector3<f64>>) {
        let j = positions.len();
        let radii = compute_radii(&self.topology, positions, self.rho);
        let r = &radii.radii;
        let mut grad = vec![Vector3::zeros(); j];
        let mut grad_r = vec![0.0; j];
        let mut sphere = 0.0;
        for &(a, b) in self.masks.sphere_pairs() {
            let diff = positions[a] - positions[b];
            let dist = diff.norm();
            let pen = r[a] + r[b] - dist;
            if pen <= 0.0 {
                continue;
            }
            sphere += pen * pen;
            grad_r[a] += 2.0 * pen;
            grad_r[b] += 2.0 * pen;
            if dist > 0.0 {
                let n = diff / dist;
                grad[a] -= n * (2.0 * pen);
                grad[b] += n * (2.0 * pen);
            }
        }

        let lambda = self.lambda_capsule;
        let mut capsule = 0.0;
        for &(a, b) in self.masks.capsule_pairs() {
            let (pa, ca) = self.masks.bones[a];
            let (pb, cb) = self.masks.bones[b];
            let cp = segment_distance(
                &positions[pa],
                &positions[ca],
                &positions[pb],
                &positions[cb],
            );
            let pen = r[pa] + r[pb] - cp.distance;
            if pen <= 0.0 {
                continue;
            }
            capsule += pen * pen;
            grad_r[pa] += 2.0 * pen * lambda;
            grad_r[pb] += 2.0 * pen * lambda;
            if cp.distance > 0.0 {
                let c1 = positions[pa] + (positions[ca] - positions[pa]) * cp.s;
                let c2 = positions[pb] + (positions[cb] - positions[pb]) * cp.t;
                let n = (c1 - c2) / cp.distance;
                let k = -2.0 * pen * lambda;
                grad[pa] += n * (k * (1.0 - cp.s));
                grad[ca] += n * (k * cp.s);
                grad[pb] -= n * (k * (1.0 - cp.t));
                grad[cb] -= n * (k * cp.t);
            }
        }

        self.accumulate_radius_gradient(positions, &grad_r, &mut grad);
        (sphere + lambda * capsule, grad)
    }

    fn accumulate_radius_gradient(
        &self,
        positions: &[Vector3<f64>],
        grad_r: &[f64],
        grad: &mut [Vector3<f64>],
    ) {
        let top = &self.topology;
        for (j, &gr) in grad_r.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            match top.parent(j) {
                Some(p) => {
                    let bone = positions[j] - positions[p];
                    let len = bone.norm();
                    if len > 0.0 {
                        let dir = bone * (self.rho * gr / len);
                        grad[j] += dir;
                        grad[p] -= dir;
                    }
                }
                None => {
                    if top.local_offsets()[0].norm() > 0.0 {
                        continue;
                    }
                    let children: Vec<usize> = top.children(j).collect();
                    let k = children.len() as f64;
                    for c in children {
                        let bone = positions[c] - positions[j];
                        let len = bone.norm();
                        if len > 0.0 {
                            let dir = bone * (self.rho * gr / (k * len));
                            grad[c] += dir;
                            grad[j] -= dir;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::UnitQuat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn grid_oracle(
        p1: &Vector3<f64>,
        q1: &Vector3<f64>,
        p2: &Vector3<f64>,
        q2: &Vector3<f64>,
    ) -> f64 {
        let steps = 1000;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let x = p1 + (q1 - p1) * (i as f64 / steps as f64);
            for k in 0..=steps {
                let y = p2 + (q2 - p2) * (k as f64 / steps as f64);
                best = best.min((x - y).norm_squared());
            }
        }
        best.sqrt()
    }

    /// Five-joint skeleton: root, two arms hanging off a spine.
    fn five_joint() -> SkeletonTopology {
        SkeletonTopology::new(
            vec![
                "root".into(),
                "spine".into(),
                "l".into(),
                "r".into(),
                "lhand".into(),
            ],
            vec![-1, 0, 1, 1, 2],
            vec![
                v(0.0, 0.0, 0.0),
                v(0.0, 1.0, 0.0),
                v(0.5, 0.0, 0.0),
                v(-0.5, 0.0, 0.0),
                v(0.0, -1.0, 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn segment_distance_examples() {
        let r = segment_distance(
            &v(0., 0., 0.),
            &v(1., 0., 0.),
            &v(0., 1., 0.),
            &v(1., 1., 0.),
        );
        assert!((r.distance - 1.0).abs() < 1e-12);
        let r = segment_distance(
            &v(0., 0., 0.),
            &v(1., 0., 0.),
            &v(2., 0., 0.),
            &v(3., 0., 0.),
        );
        assert!((r.distance - 1.0).abs() < 1e-12);
        let (p1, q1, p2, q2) = (
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(0.5, 1., -1.),
            v(0.5, 1., 1.),
        );
        let r = segment_distance(&p1, &q1, &p2, &q2);
        assert!((r.distance - 1.0).abs() < 1e-12);
        assert!((r.s - 0.5).abs() < 1e-12 && (r.t - 0.5).abs() < 1e-12);
        assert!((grid_oracle(&p1, &q1, &p2, &q2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_segments_are_points() {
        let p = v(0.3, 2.0, 0.0);
        let r = segment_distance(&p, &p, &v(0., 0., 0.), &v(1., 0., 0.));
        assert!((r.distance - 2.0).abs() < 1e-12);
        assert_eq!(r.s, 0.0);
        let r = segment_distance(&v(0., 0., 0.), &v(1., 0., 0.), &p, &p);
        assert!((r.distance - 2.0).abs() < 1e-12);
        let r = segment_distance(&p, &p, &v(0., 0., 0.), &v(0., 0., 0.));
        assert!((r.distance - p.norm()).abs() < 1e-12);
    }

    #[test]
    fn clamp_resolve_matches_oracle_when_s_leaves_range() {
        // Unconstrained s lies outside [0, 1] while t lies inside.
        let (p1, q1) = (v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0));
        let (p2, q2) = (v(2.0, -1.0, 0.5), v(3.0, 1.0, 0.5));
        let r = segment_distance(&p1, &q1, &p2, &q2);
        assert!((r.distance - grid_oracle(&p1, &q1, &p2, &q2)).abs() < 5e-3);
        let direct = ((p1 + (q1 - p1) * r.s) - (p2 + (q2 - p2) * r.t)).norm();
        assert!((direct - r.distance).abs() < 1e-12);
    }

    #[test]
    fn segment_distance_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let pts: Vec<Vector3<f64>> = (0..4)
                .map(|_| v(rng.random(), rng.random(), rng.random()))
                .collect();
            let a = segment_distance(&pts[0], &pts[1], &pts[2], &pts[3]).distance;
            let b = segment_distance(&pts[2], &pts[3], &pts[0], &pts[1]).distance;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masks_follow_hierarchy() {
        let m = ExclusionMasks::new(&five_joint());
        // parent/child and grandparent relations
        for pair in [(0, 1), (1, 2), (1, 3), (2, 4), (0, 2), (0, 3), (1, 4)] {
            assert!(m.sphere_pairs_excluded.contains(&pair), "{pair:?}");
        }
        // siblings and deeper relations stay active
        assert!(m.sphere_pairs().contains(&(2, 3)));
        assert!(m.sphere_pairs().contains(&(0, 4)));
        assert!(m.sphere_pairs().contains(&(3, 4)));
        // bones: 0:(0,1) 1:(1,2) 2:(1,3) 3:(2,4)
        assert_eq!(m.bones, vec![(0, 1), (1, 2), (1, 3), (2, 4)]);
        assert_eq!(m.capsule_pairs(), &[(0, 3), (2, 3)]);
    }

    #[test]
    fn sphere_energy_examples() {
        let top = SkeletonTopology::new(
            (0..4).map(|i| format!("j{i}")).collect(),
            vec![-1, 0, 1, 2],
            vec![Vector3::zeros(); 4],
        )
        .unwrap();
        let masks = ExclusionMasks::new(&top);
        let radii = JointRadii {
            radii: vec![0.5; 4],
            rho: 1.0,
        };
        let far = vec![
            v(0., 0., 0.),
            v(10., 0., 0.),
            v(20., 0., 0.),
            v(30., 0., 0.),
        ];
        assert_eq!(sphere_energy(&far, &radii, &masks).unwrap(), 0.0);
        // Only (0, 3) is unmasked in a 4-chain.
        let close = vec![
            v(0., 0., 0.),
            v(10., 0., 0.),
            v(20., 0., 0.),
            v(0.6, 0., 0.),
        ];
        assert!((sphere_energy(&close, &radii, &masks).unwrap() - 0.16).abs() < 1e-12);
        // Overlapping parent/child pair is masked.
        let pc = vec![
            v(0., 0., 0.),
            v(0.1, 0., 0.),
            v(20., 0., 0.),
            v(30., 0., 0.),
        ];
        assert_eq!(sphere_energy(&pc, &radii, &masks).unwrap(), 0.0);
    }

    #[test]
    fn capsule_energy_examples() {
        let top = five_joint();
        let masks = ExclusionMasks::new(&top);
        // Bones (1,2) and (2,4) share joint 2 and intersect: masked.
        let positions = vec![
            v(0., -5., 0.),
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(-1., 0., 3.),
            v(0.5, 0., 0.),
        ];
        let radii = JointRadii {
            radii: vec![0.1; 5],
            rho: 1.0,
        };
        assert_eq!(
            capsule_energy(&positions, &top, &radii, &masks).unwrap(),
            0.0
        );
    }

    #[test]
    fn parallel_capsules_single_term() {
        // In a 4-chain the only unmasked bone pair is (0,1) vs (2,3).
        let top = SkeletonTopology::new(
            (0..4).map(|i| format!("j{i}")).collect(),
            vec![-1, 0, 1, 2],
            vec![Vector3::zeros(); 4],
        )
        .unwrap();
        let masks = ExclusionMasks::new(&top);
        assert_eq!(masks.capsule_pairs(), &[(0, 2)]);
        let positions = vec![
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(1., 0.15, 0.),
            v(0., 0.15, 0.),
        ];
        let radii = JointRadii {
            radii: vec![0.1, 0.0, 0.1, 0.0],
            rho: 1.0,
        };
        let e = capsule_energy(&positions, &top, &radii, &masks).unwrap();
        assert!((e - 0.05f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn crossing_bones_on_five_joint_skeleton() {
        let top = five_joint();
        let model = CollisionModel::new(top.clone(), 0.1, 1.0).unwrap();
        // Fold the left arm across the spine so the hand bone crosses the root bone.
        let mut pose = PoseSkeleton::rest(5);
        pose.rotations[2] = UnitQuat::from_axis_angle(v(0.0, 0.0, 1.0), -0.6);
        pose.rotations[1] = UnitQuat::from_axis_angle(v(1.0, 0.0, 0.0), 0.02);
        let report = model.energy(&pose).unwrap();
        // Scalar walk-through with hand-written FK.
        let pos = crate::kinematics::forward_kinematics(&top, &pose).unwrap();
        let r: Vec<f64> = (0..5)
            .map(|j| match top.parent(j) {
                Some(p) => 0.1 * (pos[j] - pos[p]).norm(),
                None => 0.1 * (pos[1] - pos[0]).norm(),
            })
            .collect();
        let mut caps = 0.0;
        for (a, b) in [((0, 1), (2, 4)), ((1, 3), (2, 4))] {
            let d = segment_distance(&pos[a.0], &pos[a.1], &pos[b.0], &pos[b.1]).distance;
            caps += (r[a.0] + r[b.0] - d).max(0.0).powi(2);
        }
        let mut sph = 0.0;
        for (i, k) in [(0, 4), (2, 3), (3, 4)] {
            sph += (r[i] + r[k] - (pos[i] - pos[k]).norm()).max(0.0).powi(2);
        }
        assert!(caps > 0.0);
        assert!((report.capsule_energy - caps).abs() < 1e-15);
        assert!((report.sphere_energy - sph).abs() < 1e-15);
        assert!((report.total - (sph + caps)).abs() < 1e-15);
    }

    #[test]
    fn total_energy_lambda_zero_is_sphere_only() {
        let top = five_joint();
        let masks = ExclusionMasks::new(&top);
        let mut pose = PoseSkeleton::rest(5);
        pose.rotations[2] = UnitQuat::from_axis_angle(v(0.0, 0.0, 1.0), -0.6);
        let rep = total_energy(&pose, &top, 0.3, &masks, 0.0).unwrap();
        assert_eq!(rep.total, rep.sphere_energy);
        let rest = total_energy(&PoseSkeleton::rest(5), &top, 0.04, &masks, 1.0).unwrap();
        assert_eq!(rest.total, 0.0);
    }

    #[test]
    fn position_gradient_matches_finite_differences() {
        let top = five_joint();
        let model = CollisionModel::new(top.clone(), 0.3, 1.0).unwrap();
        let mut pose = PoseSkeleton::rest(5);
        pose.rotations[2] = UnitQuat::from_axis_angle(v(0.0, 0.0, 1.0), -0.5);
        pose.rotations[1] = UnitQuat::from_axis_angle(v(1.0, 0.0, 0.0), 0.05);
        let pos = crate::kinematics::forward_kinematics(&top, &pose).unwrap();
        let (e, grad) = model.position_gradient(&pos);
        assert!(e > 0.0);
        assert!((e - model.energy_at(&pos).unwrap().total).abs() < 1e-15);
        let h = 1e-6;
        for j in 0..5 {
            for c in 0..3 {
                let mut plus = pos.clone();
                let mut minus = pos.clone();
                plus[j][c] += h;
                minus[j][c] -= h;
                let fd = (model.energy_at(&plus).unwrap().total
                    - model.energy_at(&minus).unwrap().total)
                    / (2.0 * h);
                assert!(
                    (fd - grad[j][c]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "joint {j} axis {c}: {fd} vs {}",
                    grad[j][c]
                );
            }
        }
    }

    #[test]
    fn energies_are_continuous() {
        let top = five_joint();
        let model = CollisionModel::new(top.clone(), 0.3, 1.0).unwrap();
        let mut pose = PoseSkeleton::rest(5);
        pose.rotations[2] = UnitQuat::from_axis_angle(v(0.0, 0.0, 1.0), -0.5);
        let base = crate::kinematics::forward_kinematics(&top, &pose).unwrap();
        let e0 = model.energy_at(&base).unwrap();
        let h = 1e-5;
        for j in 0..5 {
            for c in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut p = base.clone();
                    p[j][c] += sign * h;
                    let e = model.energy_at(&p).unwrap();
                    assert!((e.sphere_energy - e0.sphere_energy).abs() < 1e-2);
                    assert!((e.capsule_energy - e0.capsule_energy).abs() < 1e-2);
                    assert!((e.total - e0.total).abs() < 1e-3);
                }
            }
        }
    }
}
