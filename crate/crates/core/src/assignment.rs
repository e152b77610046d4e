//! Projection of a soft transport plan onto a hard assignment.
//!
//! Every target frame (column) receives exactly one source frame (row),
//! chosen to maximize the total plan mass on the selected entries.
//!
//! * `N >= M`: one-to-one matching of targets to distinct sources.
//! * `N < M`: the source rows are tiled `⌈M/N⌉` times, the first `M` virtual
//!   rows are kept, a square matching is solved, and each virtual source
//!   `v` maps back to real source `v mod N`.
//!
//! Among equally good assignments the one whose source sequence (ordered by
//! target) is lexicographically smallest is returned.

use nalgebra::DMatrix;

use crate::align::TransportPlan;
use crate::error::{Error, Result};

/// Binary N×M matrix with exactly one 1 per column.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    pub matrix: DMatrix<u8>,
    /// `(source, target)` pairs sorted by target.
    pub pairs: Vec<(usize, usize)>,
}

impl AssignmentMatrix {
    /// Builds the matrix from the source chosen for each target.
    pub fn from_sources(sources: usize, chosen: &[usize]) -> Self {
        let mut matrix = DMatrix::zeros(sources, chosen.len());
        let pairs = chosen
            .iter()
            .enumerate()
            .map(|(m, &n)| {
                matrix[(n, m)] = 1;
                (n, m)
            })
            .collect();
        AssignmentMatrix { matrix, pairs }
    }

    /// Source index assigned to each target, in target order.
    pub fn sources(&self) -> Vec<usize> {
        self.pairs.iter().map(|&(n, _)| n).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }
}

/// Projects `plan` onto the best hard assignment.
pub fn soft_to_hard(plan: &TransportPlan) -> Result<AssignmentMatrix> {
    let (n, m) = plan.shape();
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput("transport plan is empty"));
    }
    if plan.matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(
            "transport plan entries must be finite and nonnegative".into(),
        ));
    }
    let gamma = &plan.matrix;
    let chosen = if n >= m {
        // Rows are targets, columns sources; dummy rows pad to square at zero cost.
        let cost = DMatrix::from_fn(n, n, |i, j| if i < m { -gamma[(j, i)] } else { 0.0 });
        let row_to_col = solve_lexicographic(&cost, m);
        row_to_col[..m].to_vec()
    } else {
        let cost = tiled_cost(gamma);
        let row_to_col = solve_lexicographic(&cost, m);
        row_to_col.iter().map(|&virt| virt % n).collect()
    };
    Ok(AssignmentMatrix::from_sources(n, &chosen))
}

/// Square M×M cost (rows targets, columns virtual sources) from tiling the
/// plan's rows `⌈M/N⌉` times and keeping the first `M`.
pub fn tiled_cost(gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = gamma.shape();
    DMatrix::from_fn(m, m, |target, virt| -gamma[(virt % n, target)])
}

/// Total plan mass on the assigned entries.
pub fn assignment_score(plan: &TransportPlan, assignment: &AssignmentMatrix) -> Result<f64> {
    if plan.shape() != assignment.shape() {
        let (pn, pm) = plan.shape();
        let (an, am) = assignment.shape();
        return Err(Error::DimensionMismatch {
            context: "assignment_score shape (rows*cols)",
            expected: pn * pm,
            found: an * am,
        });
    }
    Ok(assignment
        .pairs
        .iter()
        .map(|&(n, m)| plan.matrix[(n, m)])
        .sum())
}

/// Dense Hungarian algorithm on a square cost matrix.
///
/// Returns the column assigned to each row together with the row and column
/// potentials, which satisfy `cost[i][j] >= u[i] + v[j]` with equality on
/// every matched edge.
pub(crate) fn hungarian(cost: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let k = cost.nrows();
    debug_assert_eq!(k, cost.ncols());
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    // p[j]: row matched to column j (1-based, 0 = none).
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];

    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; k];
    for j in 1..=k {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Optimal assignment whose column sequence over the first `ranked_rows`
/// rows is lexicographically smallest among all optima.
///
/// Optimal matchings are exactly the perfect matchings on the tight edges of
/// the optimal potentials, so ties are resolved by walking rows in order and
/// moving each onto its smallest tight column that still admits a perfect
/// matching of the unlocked rows.
pub(crate) fn solve_lexicographic(cost: &DMatrix<f64>, ranked_rows: usize) -> Vec<usize> {
    let k = cost.nrows();
    if k == 0 {
        return Vec::new();
    }
    let (mut row_to_col, u, v) = hungarian(cost);
    let scale = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let tight = |i: usize, j: usize| cost[(i, j)] - u[i] - v[j] <= tol;

    let mut col_to_row = vec![0usize; k];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }

    for i in 0..ranked_rows.min(k) {
        let current = row_to_col[i];
        for j in 0..current {
            // Rows before i are locked; their columns are unavailable.
            if col_to_row[j] < i || !tight(i, j) {
                continue;
            }
            if let Some(path) = alternating_path(
                col_to_row[j],
                j,
                current,
                i,
                &tight,
                &row_to_col,
                &col_to_row,
            ) {
                // path: rows taking new columns along the chain, ending at `current`.
                for (row, col) in path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
    }
    row_to_col
}

/// Breadth-first search for a chain of tight edges re-matching `start_row`
/// (which loses column `taken`) so that column `freed` absorbs the slack.
/// Rows `<= locked_through` may not move.
fn alternating_path(
    start_row: usize,
    taken: usize,
    freed: usize,
    locked_through: usize,
    tight: &impl Fn(usize, usize) -> bool,
    row_to_col: &[usize],
    col_to_row: &[usize],
) -> Option<Vec<(usize, usize)>> {
    let k = row_to_col.len();
    let mut visited_col = vec![false; k];
    visited_col[taken] = true;
    // For each visited row, the (previous row, column it takes) link.
    let mut came_from: Vec<Option<(usize, usize)>> = vec![None; k];
    let mut queue = std::collections::VecDeque::from([start_row]);
    while let Some(row) = queue.pop_front() {
        for col in 0..k {
            if visited_col[col] || !tight(row, col) {
                continue;
            }
            visited_col[col] = true;
            if col == freed {
                let mut path = vec![(row, col)];
                let mut r = row;
                while let Some((prev, c)) = came_from[r] {
                    path.push((prev, c));
                    r = prev;
                }
                return Some(path);
            }
            let owner = col_to_row[col];
            if owner <= locked_through {
                continue;
            }
            came_from[owner] = Some((row, col));
            queue.push_back(owner);
        }
    }
    None
}
