//! Order-preserving Wasserstein (OPW) alignment between two motion clips.
//!
//! The transport problem is
//!
//! ```text
//! min_{Γ ∈ U(α, β)}  ⟨Γ, D⟩ − Σ Γ⊙H + λ2 · KL(Γ ‖ P)
//! ```
//!
//! with uniform marginals `α = 1/N`, `β = 1/M`, an inverse-difference-moment
//! bonus `H` that rewards couplings near the normalized-time diagonal, and a
//! Gaussian prior `P` around that diagonal. Its stationary point has the form
//! `Γ = diag(u) · K · diag(v)` with `K = P ⊙ exp((H − D) / λ2)`, so the plan
//! is found by Sinkhorn scaling of `K`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{pose_distance, MetricConfig, MotionClip};

/// Smallest kernel entry kept in the standard (non-log) solver.
pub const KERNEL_FLOOR: f64 = 1e-300;
/// Upper clamp on kernel exponents before `exp`.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpwParams {
    /// Weight of the inverse-difference-moment term.
    pub lambda1: f64,
    /// Weight of the KL term toward the prior.
    pub lambda2: f64,
    /// Standard deviation of the Gaussian prior.
    pub delta: f64,
    pub max_iters: usize,
    /// L1 marginal violation at which iteration stops early; 0 runs `max_iters`.
    pub tolerance: f64,
    /// Run Sinkhorn on log-potentials instead of scaling vectors.
    pub log_domain: bool,
    /// Replace the Gaussian prior with a constant one (classical entropic OT
    /// when combined with a vanishing `lambda1`).
    pub uniform_prior: bool,
}

impl Default for OpwParams {
    fn default() -> Self {
        OpwParams {
            lambda1: 50.0,
            lambda2: 0.1,
            delta: 1.0,
            max_iters: 20,
            tolerance: 0.0,
            log_domain: false,
            uniform_prior: false,
        }
    }
}

impl OpwParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        if !(self.lambda1 >= 0.0) || !self.lambda1.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda1 must be >= 0, got {}",
                self.lambda1
            )));
        }
        positive("lambda2", self.lambda2)?;
        positive("delta", self.delta)?;
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be >= 0, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Coupling between N source frames and M target frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub matrix: DMatrix<f64>,
    /// Target row marginal α.
    pub row_marginal: DVector<f64>,
    /// Target column marginal β.
    pub col_marginal: DVector<f64>,
}

impl TransportPlan {
    /// Wraps a matrix with uniform target marginals.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let (n, m) = matrix.shape();
        TransportPlan {
            row_marginal: DVector::from_element(n, 1.0 / n.max(1) as f64),
            col_marginal: DVector::from_element(m, 1.0 / m.max(1) as f64),
            matrix,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.matrix.nrows(), self.matrix.row_iter().map(|r| r.sum()))
    }

    pub fn col_sums(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.matrix.ncols(),
            self.matrix.column_iter().map(|c| c.sum()),
        )
    }

    /// L1 distance of the plan's marginals from the targets.
    pub fn marginal_error(&self) -> f64 {
        let rows = (self.row_sums() - &self.row_marginal).abs().sum();
        let cols = (self.col_sums() - &self.col_marginal).abs().sum();
        rows + cols
    }

    /// Largest absolute deviation of any single row or column sum.
    pub fn max_marginal_violation(&self) -> f64 {
        let rows = (self.row_sums() - &self.row_marginal).amax();
        let cols = (self.col_sums() - &self.col_marginal).amax();
        rows.max(cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub plan: TransportPlan,
    /// Transport cost ⟨Γ, D⟩ of the returned plan.
    pub distance: f64,
    /// Full regularized objective ⟨Γ,D⟩ − ⟨Γ,H⟩ + λ2·KL(Γ‖P).
    pub objective: f64,
    pub iterations_used: usize,
    pub marginal_error: f64,
}

/// Pairwise pose distances between every frame of `s` (rows) and `t` (columns).
pub fn cost_matrix(s: &MotionClip, t: &MotionClip, cfg: &MetricConfig) -> Result<DMatrix<f64>> {
    if s.joint_count() != t.joint_count() {
        return Err(Error::DimensionMismatch {
            context: "cost_matrix joint count",
            expected: s.joint_count(),
            found: t.joint_count(),
        });
    }
    let mut d = DMatrix::zeros(s.len(), t.len());
    for (n, a) in s.frames.iter().enumerate() {
        for (m, b) in t.frames.iter().enumerate() {
            d[(n, m)] = pose_distance(a, b, cfg)?;
        }
    }
    Ok(d)
}

/// Normalized time offset `n/N − m/M` with 1-based indices.
fn time_offset(n: usize, m: usize, rows: usize, cols: usize) -> f64 {
    (n + 1) as f64 / rows as f64 - (m + 1) as f64 / cols as f64
}

/// Inverse-difference-moment matrix `H(n,m) = λ1 / ((n/N − m/M)² + 1)`.
pub fn idm_matrix(rows: usize, cols: usize, p: &OpwParams) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |n, m| {
        let off = time_offset(n, m, rows, cols);
        p.lambda1 / (off * off + 1.0)
    })
}

/// Gaussian prior around the normalized-time diagonal.
pub fn gaussian_prior(rows: usize, cols: usize, p: &OpwParams) -> DMatrix<f64> {
    let peak = 1.0 / (p.delta * (2.0 * std::f64::consts::PI).sqrt());
    let scale = (1.0 / (rows * rows) as f64 + 1.0 / (cols * cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |n, m| {
        let d = time_offset(n, m, rows, cols).abs() / scale;
        peak * (-d * d / (2.0 * p.delta * p.delta)).exp()
    })
}

/// Aligns two clips. Rows of the plan index `s`, columns index `t`.
pub fn opw_align(
    s: &MotionClip,
    t: &MotionClip,
    p: &OpwParams,
    cfg: &MetricConfig,
) -> Result<AlignmentResult> {
    if s.is_empty() || t.is_empty() {
        return Err(Error::EmptyInput("opw_align needs nonempty clips"));
    }
    let d = cost_matrix(s, t, cfg)?;
    opw_from_cost(&d, p)
}

/// Solves the OPW problem for a precomputed cost matrix.
pub fn opw_from_cost(d: &DMatrix<f64>, p: &OpwParams) -> Result<AlignmentResult> {
    p.validate()?;
    let (rows, cols) = d.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyInput("cost matrix is empty"));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow(
            "cost matrix has non-finite entries".into(),
        ));
    }
    let h = idm_matrix(rows, cols, p);
    let prior = if p.uniform_prior {
        DMatrix::from_element(rows, cols, 1.0)
    } else {
        gaussian_prior(rows, cols, p)
    };
    // Exponent of the kernel without the prior factor.
    let exponent = (&h - d) / p.lambda2;

    let (matrix, iterations_used) = if p.log_domain {
        sinkhorn_log(&exponent, &prior, p)?
    } else {
        sinkhorn_scaling(&exponent, &prior, p)?
    };
    let plan = TransportPlan::from_matrix(matrix);
    let marginal_error = plan.marginal_error();
    let distance = frobenius(&plan.matrix, d);

    let mut kl = 0.0;
    for (g, pr) in plan.matrix.iter().zip(prior.iter()) {
        if *g > 0.0 {
            kl += g * (g / pr).ln();
        }
        kl += pr - g;
    }
    let objective = distance - frobenius(&plan.matrix, &h) + p.lambda2 * kl;

    Ok(AlignmentResult {
        plan,
        distance,
        objective,
        iterations_used,
        marginal_error,
    })
}

/// `Σ a∘b` summed in column-major storage order.
pub fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn row_violation(plan_rows: impl Iterator<Item = f64>, alpha: f64) -> f64 {
    plan_rows.map(|s| (s - alpha).abs()).sum()
}

fn sinkhorn_scaling(
    exponent: &DMatrix<f64>,
    prior: &DMatrix<f64>,
    p: &OpwParams,
) -> Result<(DMatrix<f64>, usize)> {
    let (rows, cols) = exponent.shape();
    let alpha = 1.0 / rows as f64;
    let beta = 1.0 / cols as f64;

    // Shifting each row by its max exponent is absorbed by u.
    let mut kernel = exponent.clone();
    for n in 0..rows {
        let shift = kernel.row(n).max();
        for m in 0..cols {
            let e = (kernel[(n, m)] - shift).min(MAX_EXPONENT);
            kernel[(n, m)] = (prior[(n, m)] * e.exp()).max(KERNEL_FLOOR);
        }
    }
    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("kernel entry overflowed".into()));
    }

    let mut u = DVector::from_element(rows, 1.0);
    let mut v = DVector::from_element(cols, 1.0);
    let mut iterations = 0;
    for _ in 0..p.max_iters {
        let kv = &kernel * &v;
        u = kv.map(|x| alpha / x);
        let ktu = kernel.tr_mul(&u);
        v = ktu.map(|x| beta / x);
        iterations += 1;
        if u.iter()
            .chain(v.iter())
            .any(|x| !x.is_finite() || *x == 0.0)
        {
            return Err(Error::NumericOverflow(format!(
                "scaling vectors degenerated at iteration {iterations}"
            )));
        }
        if p.tolerance > 0.0 {
            // Columns are exact right after the v-update.
            let kv = &kernel * &v;
            let err = row_violation(kv.iter().zip(u.iter()).map(|(a, b)| a * b), alpha);
            if err < p.tolerance {
                break;
            }
        }
    }
    let mut plan = kernel;
    for n in 0..rows {
        for m in 0..cols {
            plan[(n, m)] *= u[n] * v[m];
        }
    }
    Ok((plan, iterations))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn sinkhorn_log(
    exponent: &DMatrix<f64>,
    prior: &DMatrix<f64>,
    p: &OpwParams,
) -> Result<(DMatrix<f64>, usize)> {
    let (rows, cols) = exponent.shape();
    let log_alpha = -(rows as f64).ln();
    let log_beta = -(cols as f64).ln();
    let log_k = exponent + prior.map(f64::ln);

    let mut f = DVector::zeros(rows);
    let mut g = DVector::zeros(cols);
    let mut iterations = 0;
    for _ in 0..p.max_iters {
        for n in 0..rows {
            f[n] = log_alpha - log_sum_exp((0..cols).map(|m| log_k[(n, m)] + g[m]));
        }
        for m in 0..cols {
            g[m] = log_beta - log_sum_exp((0..rows).map(|n| log_k[(n, m)] + f[n]));
        }
        iterations += 1;
        if f.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NumericOverflow(format!(
                "log potentials degenerated at iteration {iterations}"
            )));
        }
        if p.tolerance > 0.0 {
            let alpha = 1.0 / rows as f64;
            let err = row_violation(
                (0..rows).map(|n| {
                    (0..cols)
                        .map(|m| (f[n] + log_k[(n, m)] + g[m]).exp())
                        .sum::<f64>()
                }),
                alpha,
            );
            if err < p.tolerance {
                break;
            }
        }
    }
    let plan = DMatrix::from_fn(rows, cols, |n, m| (f[n] + log_k[(n, m)] + g[m]).exp());
    Ok((plan, iterations))
}
