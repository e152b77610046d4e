#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Every length-`len` sequence of distinct values from `0..n`, in
/// lexicographic order.
pub fn injections(n: usize, len: usize) -> Vec<Vec<usize>> {
    fn rec(
        n: usize,
        len: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(n, len, used, cur, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(n, len, &mut vec![false; n], &mut Vec::new(), &mut out);
    out
}

/// Exhaustive optimum of the hard-assignment problem.
///
/// Returns the best score and, among optimal assignments, the source sequence
/// that is lexicographically smallest. For `N < M` the enumeration runs over
/// permutations of the tiled square matrix and compares virtual-source
/// sequences before mapping back with `v mod N`.
pub fn brute_force(gamma: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let (n, m) = gamma.shape();
    let candidates = if n >= m {
        injections(n, m)
    } else {
        injections(m, m)
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_seq = Vec::new();
    for seq in candidates {
        let score: f64 = seq
            .iter()
            .enumerate()
            .map(|(t, &v)| gamma[(v % n, t)])
            .sum();
        // Candidates arrive in lexicographic order, so strict improvement keeps
        // the smallest optimal sequence.
        if score > best {
            best = score;
            best_seq = seq;
        }
    }
    (best, best_seq.into_iter().map(|v| v % n).collect())
}

const C: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `(frame, joint, (w, x, y, z))`.
pub type GoldenRotation = (usize, usize, [f64; 4]);

/// Hand-converted rotations of the golden BVH files, keyed by file stem.
///
/// Channels compose in file order, `q = q_first ⊗ q_second ⊗ q_third`, with
/// `q_axis(θ) = (cos θ/2, sin θ/2 · axis)`.
pub fn golden_bvh() -> Vec<(&'static str, Vec<GoldenRotation>)> {
    let (c8, s8) = (
        (2.0 + 2f64.sqrt()).sqrt() / 2.0,
        (2.0 - 2f64.sqrt()).sqrt() / 2.0,
    );
    vec![
        (
            "zxy_two_joint",
            vec![
                (0, 0, [1.0, 0.0, 0.0, 0.0]),
                (0, 1, [1.0, 0.0, 0.0, 0.0]),
                (1, 1, [C, C, 0.0, 0.0]),
                (2, 0, [C, 0.0, 0.0, C]),
                (2, 1, [C, 0.0, -C, 0.0]),
            ],
        ),
        (
            "xyz_chain",
            vec![
                // X90 then Y90: (c,c,0,0)⊗(c,0,c,0) = (½,½,½,½).
                (0, 0, [0.5, 0.5, 0.5, 0.5]),
                (0, 1, [0.0, 0.0, 0.0, 1.0]),
                (0, 2, [3f64.sqrt() / 2.0, 0.5, 0.0, 0.0]),
                (1, 0, [1.0, 0.0, 0.0, 0.0]),
                (1, 1, [C, -C, 0.0, 0.0]),
                (1, 2, [c8, 0.0, 0.0, s8]),
            ],
        ),
        (
            "yxz_branching",
            vec![
                // Y90 then X90: (c,0,c,0)⊗(c,c,0,0) = (½,½,½,−½).
                (0, 0, [0.5, 0.5, 0.5, -0.5]),
                (0, 1, [C, 0.0, 0.0, -C]),
                (0, 2, [0.0, 1.0, 0.0, 0.0]),
                (0, 3, [1.0, 0.0, 0.0, 0.0]),
            ],
        ),
    ]
}
