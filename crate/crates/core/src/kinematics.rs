//! Skeleton topology, forward kinematics and joint sphere radii.
//!
//! Transforms use the column-vector convention: the world transform of joint
//! `j` is `T_parent · T_local(j)` and the joint position is its translation
//! column. The root's local translation is the pose root translation plus the
//! topology's root offset (normally zero).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pose::PoseSkeleton;

/// Default sphere radius scale relative to bone length.
pub const DEFAULT_RHO: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonTopology {
    joint_names: Vec<String>,
    parents: Vec<i64>,
    local_offsets: Vec<Vector3<f64>>,
}

impl SkeletonTopology {
    pub fn new(
        joint_names: Vec<String>,
        parents: Vec<i64>,
        local_offsets: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let j = joint_names.len();
        if j == 0 {
            return Err(Error::Topology("skeleton has no joints".into()));
        }
        if parents.len() != j || local_offsets.len() != j {
            return Err(Error::Topology(format!(
                "{} joint names, {} parents, {} offsets",
                j,
                parents.len(),
                local_offsets.len()
            )));
        }
        let roots = parents.iter().filter(|&&p| p == -1).count();
        if roots != 1 || parents[0] != -1 {
            return Err(Error::Topology(
                "exactly one root is required and it must be joint 0".into(),
            ));
        }
        for (idx, &p) in parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= idx {
                return Err(Error::Topology(format!(
                    "joint {idx} ('{}') has parent {p}; parents must precede children",
                    joint_names[idx]
                )));
            }
        }
        if local_offsets
            .iter()
            .any(|o| o.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Topology("offsets must be finite".into()));
        }
        Ok(SkeletonTopology {
            joint_names,
            parents,
            local_offsets,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parents(&self) -> &[i64] {
        &self.parents
    }

    pub fn local_offsets(&self) -> &[Vector3<f64>] {
        &self.local_offsets
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        usize::try_from(self.parents[joint]).ok()
    }

    pub fn children(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.joint_count()).filter(move |&c| self.parent(c) == Some(joint))
    }

    /// Bones as `(parent, child)` pairs, ordered by child index.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        (1..self.joint_count())
            .filter_map(|c| self.parent(c).map(|p| (p, c)))
            .collect()
    }

    /// Copy of the topology with every offset multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SkeletonTopology {
        SkeletonTopology {
            local_offsets: self.local_offsets.iter().map(|o| o * factor).collect(),
            ..self.clone()
        }
    }

    /// Identifier of the joint structure (names and parents, not offsets).
    ///
    /// Clips recorded on differently sized skeletons with the same hierarchy
    /// share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, parent) in self.joint_names.iter().zip(&self.parents) {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(parent.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Rotation matrix of a possibly non-unit quaternion `(w, x, y, z)`.
///
/// The quaternion is implicitly normalized, so the result is always a proper
/// rotation and depends only on the direction of `q`.
pub fn rotation_from_raw(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    let n = w * w + x * x + y * y + z * z;
    let s = 2.0 / n;
    Matrix3::new(
        1.0 - s * (y * y + z * z),
        s * (x * y - w * z),
        s * (x * z + w * y),
        s * (x * y + w * z),
        1.0 - s * (x * x + z * z),
        s * (y * z - w * x),
        s * (x * z - w * y),
        s * (y * z + w * x),
        1.0 - s * (x * x + y * y),
    )
}

/// Partial derivatives of [`rotation_from_raw`] with respect to w, x, y, z.
pub fn rotation_partials(q: &[f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = *q;
    let n = w * w + x * x + y * y + z * z;
    // R = B(q) / n with B homogeneous quadratic.
    let b = Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    );
    #[rustfmt::skip]
    let db = [
        Matrix3::new(
            2.0 * w, -2.0 * z, 2.0 * y,
            2.0 * z, 2.0 * w, -2.0 * x,
            -2.0 * y, 2.0 * x, 2.0 * w,
        ),
        Matrix3::new(
            2.0 * x, 2.0 * y, 2.0 * z,
            2.0 * y, -2.0 * x, -2.0 * w,
            2.0 * z, 2.0 * w, -2.0 * x,
        ),
        Matrix3::new(
            -2.0 * y, 2.0 * x, 2.0 * w,
            2.0 * x, 2.0 * y, 2.0 * z,
            -2.0 * w, 2.0 * z, -2.0 * y,
        ),
        Matrix3::new(
            -2.0 * z, -2.0 * w, 2.0 * x,
            2.0 * w, -2.0 * z, 2.0 * y,
            2.0 * x, 2.0 * y, 2.0 * z,
        ),
    ];
    let comps = [w, x, y, z];
    std::array::from_fn(|c| db[c] / n - b * (2.0 * comps[c] / (n * n)))
}

/// World positions and orientations of every joint.
#[derive(Debug, Clone)]
pub struct FkState {
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Vec<Matrix3<f64>>,
}

/// Forward kinematics on raw quaternion components.
pub fn forward_kinematics_raw(
    topology: &SkeletonTopology,
    root_translation: &Vector3<f64>,
    quats: &[[f64; 4]],
) -> Result<FkState> {
    let j = topology.joint_count();
    if quats.len() != j {
        return Err(Error::DimensionMismatch {
            context: "forward kinematics joint count",
            expected: j,
            found: quats.len(),
        });
    }
    let mut positions = Vec::with_capacity(j);
    let mut orientations = Vec::with_capacity(j);
    for (idx, q) in quats.iter().enumerate() {
        let local = rotation_from_raw(q);
        let offset = topology.local_offsets[idx];
        match topology.parent(idx) {
            None => {
                positions.push(root_translation + offset);
                orientations.push(local);
            }
            Some(p) => {
                let g = orientations[p];
                positions.push(positions[p] + g * offset);
                orientations.push(g * local);
            }
        }
    }
    Ok(FkState {
        positions,
        orientations,
    })
}

/// World-space joint positions (J rows of xyz) for a pose.
pub fn forward_kinematics(
    topology: &SkeletonTopology,
    pose: &PoseSkeleton,
) -> Result<Vec<Vector3<f64>>> {
    let quats: Vec<[f64; 4]> = pose.rotations.iter().map(|q| q.as_array()).collect();
    Ok(forward_kinematics_raw(topology, &pose.root_translation, &quats)?.positions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRadii {
    pub radii: Vec<f64>,
    pub rho: f64,
}

/// Sphere radius per joint: `rho` times the bone length to the parent.
///
/// The root uses `rho·‖root offset‖`, or `rho` times the mean distance to its
/// children when that offset is zero.
pub fn compute_radii(
    topology: &SkeletonTopology,
    positions: &[Vector3<f64>],
    rho: f64,
) -> JointRadii {
    let radii = (0..topology.joint_count())
        .map(|j| match topology.parent(j) {
            Some(p) => rho * (positions[j] - positions[p]).norm(),
            None => root_radius(topology, positions, rho),
        })
        .collect();
    JointRadii { radii, rho }
}

fn root_radius(topology: &SkeletonTopology, positions: &[Vector3<f64>], rho: f64) -> f64 {
    let offset = topology.local_offsets[0].norm();
    if offset > 0.0 {
        return rho * offset;
    }
    let (sum, count) = topology.children(0).fold((0.0, 0usize), |(s, c), child| {
        (s + (positions[child] - positions[0]).norm(), c + 1)
    });
    if count == 0 {
        0.0
    } else {
        rho * sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::UnitQuat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn chain(n: usize) -> SkeletonTopology {
        SkeletonTopology::new(
            (0..n).map(|i| format!("j{i}")).collect(),
            (0..n as i64).map(|i| i - 1).collect(),
            (0..n)
                .map(|i| {
                    if i == 0 {
                        Vector3::zeros()
                    } else {
                        Vector3::new(0.0, 0.0, 1.0)
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuat {
        loop {
            let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if let Some(q) = UnitQuat::from_array(a) {
                return q;
            }
        }
    }

    #[test]
    fn topology_validation() {
        let names = vec!["a".to_string(), "b".to_string()];
        let offs = vec![Vector3::zeros(); 2];
        assert!(SkeletonTopology::new(names.clone(), vec![-1, 0], offs.clone()).is_ok());
        assert!(SkeletonTopology::new(names.clone(), vec![1, -1], offs.clone()).is_err());
        assert!(SkeletonTopology::new(names.clone(), vec![-1, -1], offs.clone()).is_err());
        assert!(SkeletonTopology::new(names.clone(), vec![-1, 1], offs.clone()).is_err());
        assert!(SkeletonTopology::new(names.clone(), vec![-1], offs.clone()).is_err());
        assert!(SkeletonTopology::new(
            names,
            vec![-1, 0],
            vec![Vector3::zeros(), Vector3::new(f64::NAN, 0.0, 0.0)]
        )
        .is_err());
    }

    #[test]
    fn chain_positions() {
        let top = chain(3);
        let pos = forward_kinematics(&top, &PoseSkeleton::rest(3)).unwrap();
        assert_eq!(
            pos,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(0.0, 0.0, 2.0)
            ]
        );

        let mut pose = PoseSkeleton::rest(3);
        pose.rotations[0] = UnitQuat::from_axis_angle(Vector3::x(), FRAC_PI_2);
        let pos = forward_kinematics(&top, &pose).unwrap();
        let expected = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, -2.0, 0.0),
        ];
        for (p, e) in pos.iter().zip(expected) {
            assert!((p - e).norm() < 1e-12);
        }

        pose.root_translation = Vector3::new(5.0, 0.0, 0.0);
        let moved = forward_kinematics(&top, &pose).unwrap();
        for (a, b) in moved.iter().zip(&pos) {
            assert!((a - b - Vector3::new(5.0, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn fk_rejects_wrong_joint_count() {
        assert!(forward_kinematics(&chain(3), &PoseSkeleton::rest(2)).is_err());
    }

    #[test]
    fn fk_is_rigid_motion_equivariant() {
        let top = SkeletonTopology::new(
            (0..6).map(|i| format!("j{i}")).collect(),
            vec![-1, 0, 1, 1, 0, 4],
            vec![
                Vector3::zeros(),
                Vector3::new(0.0, 0.5, 0.0),
                Vector3::new(0.2, 0.1, 0.0),
                Vector3::new(-0.2, 0.1, 0.0),
                Vector3::new(0.1, -0.1, 0.3),
                Vector3::new(0.0, -0.4, 0.0),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pose = PoseSkeleton::new(
                Vector3::new(rng.random(), rng.random(), rng.random()),
                (0..6).map(|_| random_quat(&mut rng)).collect(),
            );
            let g = random_quat(&mut rng);
            let mut moved = pose.clone();
            moved.rotations[0] = g.mul(&pose.rotations[0]);
            moved.root_translation = g.rotate(&pose.root_translation);
            let a = forward_kinematics(&top, &pose).unwrap();
            let b = forward_kinematics(&top, &moved).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                assert!((g.rotate(pa) - pb).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_partials_match_finite_differences() {
        let q = [0.3, -0.7, 0.4, 0.9];
        let parts = rotation_partials(&q);
        let h = 1e-6;
        for c in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[c] += h;
            qm[c] -= h;
            let fd = (rotation_from_raw(&qp) - rotation_from_raw(&qm)) / (2.0 * h);
            assert!((fd - parts[c]).norm() < 1e-8, "component {c}");
        }
    }

    #[test]
    fn radii_rules() {
        let top = chain(3);
        let pos = forward_kinematics(&top, &PoseSkeleton::rest(3)).unwrap();
        let r = compute_radii(&top, &pos, DEFAULT_RHO);
        assert_eq!(&r.radii[1..], &[0.04, 0.04]);
        // Root offset is zero: mean of the single child bone.
        assert_eq!(r.radii[0], 0.04);

        let zero_bone = SkeletonTopology::new(
            vec!["r".into(), "a".into(), "b".into()],
            vec![-1, 0, 0],
            vec![
                Vector3::zeros(),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 3.0, 0.0),
            ],
        )
        .unwrap();
        let pos = forward_kinematics(&zero_bone, &PoseSkeleton::rest(3)).unwrap();
        let r = compute_radii(&zero_bone, &pos, 0.5);
        assert_eq!(r.radii, vec![0.5 * (1.0 + 3.0) / 2.0, 0.5, 1.5]);

        let degenerate = SkeletonTopology::new(
            vec!["r".into(), "a".into()],
            vec![-1, 0],
            vec![Vector3::new(0.0, 2.0, 0.0), Vector3::zeros()],
        )
        .unwrap();
        let pos = forward_kinematics(&degenerate, &PoseSkeleton::rest(2)).unwrap();
        let r = compute_radii(&degenerate, &pos, 0.1);
        assert_eq!(r.radii[1], 0.0);
        assert!((r.radii[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fingerprint_ignores_offsets() {
        let a = chain(4);
        let b = a.scaled(2.5);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), chain(5).fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
