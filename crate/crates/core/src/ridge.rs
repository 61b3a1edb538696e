//! Ridge solutions from exact Gram matrices and from sketches, together with
//! the coefficient-error bound calculators.
//!
//! For a sketch `B = diag(sigma) V` the regularized inverse never needs to be
//! formed: `V` spans the only directions where `B^T B + gamma I` differs from
//! `gamma I`, so
//!
//! ```text
//! (V^T S^2 V + g I)^{-1} c = V^T (S^2 + g I)^{-1} V c + (c - V^T V c) / g
//! ```
//!
//! which costs `O(ell * d)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FdError, Result};
use crate::linalg::{self, Cholesky, DenseMatrix, DenseVector};
use crate::sketch::{FdSketch, Variant};

/// Which algorithm produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverTag {
    /// Exact streaming ridge regression on the full Gram matrix.
    #[serde(rename = "rr")]
    Exact,
    Fd,
    Rfd,
    Isvd,
    #[serde(rename = "2lfd")]
    TwoLevel,
    Rp,
    Cs,
}

impl SolverTag {
    pub const ALL: [SolverTag; 7] = [
        SolverTag::Exact,
        SolverTag::Fd,
        SolverTag::Rfd,
        SolverTag::Isvd,
        SolverTag::TwoLevel,
        SolverTag::Rp,
        SolverTag::Cs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverTag::Exact => "rr",
            SolverTag::Fd => "fd",
            SolverTag::Rfd => "rfd",
            SolverTag::Isvd => "isvd",
            SolverTag::TwoLevel => "2lfd",
            SolverTag::Rp => "rp",
            SolverTag::Cs => "cs",
        }
    }

    /// Solvers whose output depends only on the data, not on a seed.
    pub fn is_deterministic(self) -> bool {
        !matches!(self, SolverTag::TwoLevel | SolverTag::Rp | SolverTag::Cs)
    }

    /// Members of the Frequent Directions family (including the heuristic
    /// truncated SVD).
    pub fn is_fd_family(self) -> bool {
        matches!(
            self,
            SolverTag::Fd | SolverTag::Rfd | SolverTag::Isvd | SolverTag::TwoLevel
        )
    }
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverTag {
    type Err = FdError;

    fn from_str(s: &str) -> Result<Self> {
        let tag = match s.trim().to_ascii_lowercase().as_str() {
            "rr" | "exact" => SolverTag::Exact,
            "fd" | "fdrr" => SolverTag::Fd,
            "rfd" | "rfdrr" => SolverTag::Rfd,
            "isvd" | "isvdrr" => SolverTag::Isvd,
            "2lfd" | "2lfdrr" | "twolevel" => SolverTag::TwoLevel,
            "rp" | "rprr" => SolverTag::Rp,
            "cs" | "csrr" => SolverTag::Cs,
            other => return Err(FdError::arg(format!("unknown solver {other:?}"))),
        };
        Ok(tag)
    }
}

/// Ridge coefficients and the regularization actually applied.
#[derive(Clone, Debug)]
pub struct RidgeSolution {
    pub x: DenseVector,
    /// `gamma`, or `gamma + alpha` for RFD.
    pub gamma_effective: f64,
    pub solver: SolverTag,
}

const GRAM_BLOCK: usize = 64;

/// Exact running `A^T A` and `A^T b`.
///
/// Rows are folded in as rank-one updates; they are grouped into small
/// blocks so the update runs as a matrix product.
#[derive(Clone, Debug)]
pub struct GramAccumulator {
    d: usize,
    gram: DenseMatrix,
    c: Vec<f64>,
    n_seen: u64,
    block: Vec<f64>,
}

impl GramAccumulator {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(FdError::arg("feature dimension d must be >= 1"));
        }
        Ok(Self {
            d,
            gram: DenseMatrix::zeros(d, d),
            c: vec![0.0; d],
            n_seen: 0,
            block: Vec::with_capacity(GRAM_BLOCK * d),
        })
    }

    /// Accumulates an already-formed Gram matrix and `A^T b`.
    pub fn from_parts(gram: DenseMatrix, c: Vec<f64>, n_seen: u64) -> Result<Self> {
        if gram.rows() != gram.cols() || c.len() != gram.rows() {
            return Err(FdError::arg("Gram matrix and c have inconsistent shapes"));
        }
        let mut acc = Self::new(gram.rows())?;
        acc.gram = gram;
        acc.c = c;
        acc.n_seen = n_seen;
        Ok(acc)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn push(&mut self, row: &[f64], label: f64) -> Result<()> {
        if row.len() != self.d {
            return Err(FdError::arg(format!(
                "row has {} entries, accumulator dimension is {}",
                row.len(),
                self.d
            )));
        }
        if !label.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(FdError::input("non-finite row or label"));
        }
        linalg::axpy(label, row, &mut self.c);
        self.block.extend_from_slice(row);
        self.n_seen += 1;
        if self.block.len() == GRAM_BLOCK * self.d {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if self.block.is_empty() {
            return Ok(());
        }
        let rows = self.block.len() / self.d;
        let block = DenseMatrix::from_row_major(rows, self.d, std::mem::take(&mut self.block))?;
        self.gram.add_gram_of(&block)?;
        let mut buf = block.into_vec();
        buf.clear();
        self.block = buf;
        Ok(())
    }

    fn ensure_flushed(&self) -> Result<()> {
        if self.block.is_empty() {
            Ok(())
        } else {
            Err(FdError::State("flush the accumulator before reading it".into()))
        }
    }

    /// `A^T A`; the accumulator must be flushed.
    pub fn gram(&self) -> Result<&DenseMatrix> {
        self.ensure_flushed()?;
        Ok(&self.gram)
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }
}

/// `x = (A^T A + gamma I)^{-1} A^T b` from the exact accumulator.
pub fn solve_exact(acc: &GramAccumulator, gamma: f64) -> Result<RidgeSolution> {
    let x = solve_gram(acc.gram()?, acc.c(), gamma)?;
    Ok(RidgeSolution {
        x: DenseVector::new(x)?,
        gamma_effective: gamma,
        solver: SolverTag::Exact,
    })
}

/// Solves `(gram + gamma I) x = c` by Cholesky. `gamma = 0` is accepted
/// when `gram` itself is positive definite.
pub fn solve_gram(gram: &DenseMatrix, c: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(FdError::arg(format!("gamma must be non-negative, got {gamma}")));
    }
    if gram.rows() != gram.cols() || gram.rows() != c.len() {
        return Err(FdError::arg("Gram matrix and right-hand side disagree in shape"));
    }
    let system = gram.add_diag(gamma);
    let chol = Cholesky::new(&system).map_err(|e| match e {
        FdError::Numeric(msg) => FdError::numeric(format!("ridge system is singular: {msg}")),
        other => other,
    })?;
    chol.solve(c)
}

/// `x = (B^T B + g I)^{-1} c` for a sketch, with `g = gamma` (FD, iSVD) or
/// `g = gamma + alpha` (RFD). Pending rows are not part of the sketch and
/// must be flushed first.
pub fn solve_from_sketch(sketch: &FdSketch, gamma: f64) -> Result<RidgeSolution> {
    if !sketch.is_flushed() {
        return Err(FdError::State("flush the sketch before solving".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(FdError::arg(format!("sketch solvers need gamma > 0, got {gamma}")));
    }
    let gamma_effective = gamma + sketch.alpha();
    let x = solve_spectral(sketch.sigma(), sketch.v_rows(), sketch.c(), gamma_effective)?;
    let solver = match sketch.variant() {
        Variant::Fd => SolverTag::Fd,
        Variant::Rfd => SolverTag::Rfd,
        Variant::Isvd => SolverTag::Isvd,
    };
    Ok(RidgeSolution {
        x: DenseVector::new(x)?,
        gamma_effective,
        solver,
    })
}

/// `(V^T diag(sigma^2) V + gamma I)^{-1} c` for orthonormal (or zero) rows
/// of `v_rows`.
pub fn solve_spectral(sigma: &[f64], v_rows: &DenseMatrix, c: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(FdError::arg(format!("gamma must be positive, got {gamma}")));
    }
    if sigma.len() != v_rows.rows() || v_rows.cols() != c.len() {
        return Err(FdError::arg("sketch and c disagree in shape"));
    }
    let mut x: Vec<f64> = c.iter().map(|v| v / gamma).collect();
    for (i, &s) in sigma.iter().enumerate() {
        let v = v_rows.row(i);
        let proj = linalg::dot(v, c);
        if proj == 0.0 {
            continue;
        }
        // 1/(s^2 + g) - 1/g
        let s2 = s * s;
        let weight = -s2 / (gamma * (s2 + gamma));
        linalg::axpy(weight * proj, v, &mut x);
    }
    Ok(x)
}

/// Quantities of the coefficient-error bound
/// `||x_hat - x|| <= ||A^T A - C^T C||_2 / (lambda_min(C^T C) + gamma) * ||x||`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    /// `||A^T A - C^T C||_2`.
    pub covariance_error: f64,
    pub lambda_min_sketch: f64,
    /// `covariance_error / (lambda_min_sketch + gamma)`.
    pub lemma1_factor: f64,
    /// `k` minimizing `tail_k / (ell - k)`.
    pub k_best: usize,
    /// `||A - A_k||_F^2` at `k_best`.
    pub tail_at_k: f64,
}

const SYMMETRY_TOL: f64 = 1e-10;

/// Evaluates the coefficient-error bound for a sketch Gram matrix against
/// the exact one; `ell` is the sketch size used to pick `k_best`.
pub fn lemma1_bound(
    gram_exact: &DenseMatrix,
    gram_sketch: &DenseMatrix,
    gamma: f64,
    ell: usize,
) -> Result<BoundReport> {
    if !(gamma > 0.0) {
        return Err(FdError::arg(format!("gamma must be positive, got {gamma}")));
    }
    if gram_exact.shape() != gram_sketch.shape() || gram_exact.rows() != gram_exact.cols() {
        return Err(FdError::arg("Gram matrices must be square and of equal size"));
    }
    for (name, g) in [("exact", gram_exact), ("sketch", gram_sketch)] {
        let scale = g.max_abs().max(1.0);
        if g.asymmetry() > SYMMETRY_TOL * scale {
            return Err(FdError::arg(format!("{name} Gram matrix is not symmetric")));
        }
    }
    let gap = gram_exact.sub(gram_sketch)?.symmetrized();
    let gap_eig = linalg::symmetric_eigenvalues(&gap)?;
    let covariance_error = gap_eig
        .first()
        .copied()
        .unwrap_or(0.0)
        .abs()
        .max(gap_eig.last().copied().unwrap_or(0.0).abs());
    let sketch_eig = linalg::symmetric_eigenvalues(&gram_sketch.clone().symmetrized())?;
    let lambda_min_sketch = sketch_eig.last().copied().unwrap_or(0.0);
    let denom = lambda_min_sketch + gamma;
    if !(denom > 0.0) {
        return Err(FdError::numeric("lambda_min + gamma is not positive"));
    }

    let exact_eig = linalg::symmetric_eigenvalues(&gram_exact.clone().symmetrized())?;
    let (k_best, tail_at_k) = best_k(&exact_eig, ell.max(1));
    Ok(BoundReport {
        covariance_error,
        lambda_min_sketch,
        lemma1_factor: covariance_error / denom,
        k_best,
        tail_at_k,
    })
}

/// Minimizes `tail_k / (ell - k)` over `k < ell` given Gram eigenvalues in
/// non-increasing order.
pub fn best_k(gram_eigenvalues: &[f64], ell: usize) -> (usize, f64) {
    let tail = |k: usize| -> f64 {
        gram_eigenvalues
            .iter()
            .skip(k)
            .rev()
            .map(|&v| v.max(0.0))
            .sum()
    };
    (0..ell)
        .map(|k| (k, tail(k)))
        .min_by(|(ka, ta), (kb, tb)| {
            let a = ta / (ell - ka) as f64;
            let b = tb / (ell - kb) as f64;
            a.total_cmp(&b)
        })
        .unwrap_or((0, tail(0)))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(FdError::arg(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Smallest `gamma` for which an `ell`-row FD (or RFD when `robust`) sketch
/// guarantees relative coefficient error `eps`: `tail / (eps (ell - k))`,
/// halved for RFD.
pub fn theorem_required_gamma(tail: f64, ell: usize, k: usize, eps: f64, robust: bool) -> Result<f64> {
    if k >= ell {
        return Err(FdError::arg(format!("k = {k} must be below ell = {ell}")));
    }
    check_eps(eps)?;
    if !(tail >= 0.0) {
        return Err(FdError::arg("tail mass must be non-negative"));
    }
    let denom = if robust { 2.0 } else { 1.0 } * eps * (ell - k) as f64;
    Ok(tail / denom)
}

/// Smallest `ell` guaranteeing relative coefficient error `eps` at the
/// given `gamma`: `ceil(tail / (gamma eps)) + k`, with `2 gamma eps` for RFD.
/// Never less than `k + 1`.
pub fn theorem_required_ell(tail: f64, gamma: f64, k: usize, eps: f64, robust: bool) -> Result<usize> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(FdError::arg(format!("gamma must be positive, got {gamma}")));
    }
    check_eps(eps)?;
    if !(tail >= 0.0) {
        return Err(FdError::arg("tail mass must be non-negative"));
    }
    let denom = if robust { 2.0 } else { 1.0 } * gamma * eps;
    let rows = (tail / denom).ceil();
    if rows > (usize::MAX / 2) as f64 {
        return Err(FdError::arg("required sketch size overflows"));
    }
    Ok((rows as usize + k).max(k + 1))
}

/// `||x_hat - x_ref|| / ||x_ref||`.
pub fn coef_error(x_hat: &[f64], x_ref: &[f64]) -> Result<f64> {
    if x_hat.len() != x_ref.len() {
        return Err(FdError::arg("coefficient vectors differ in length"));
    }
    let reference = linalg::norm(x_ref);
    if reference == 0.0 {
        return Err(FdError::arg("reference coefficients are zero"));
    }
    let diff: f64 = x_hat
        .iter()
        .zip(x_ref)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(diff.sqrt() / reference)
}

/// Mean squared prediction error `||A x - b||^2 / n`.
pub fn pred_error(a_test: &DenseMatrix, b_test: &[f64], x: &[f64]) -> Result<f64> {
    if a_test.rows() != b_test.len() || a_test.cols() != x.len() {
        return Err(FdError::arg(format!(
            "test matrix {:?}, labels {}, coefficients {}",
            a_test.shape(),
            b_test.len(),
            x.len()
        )));
    }
    if b_test.is_empty() {
        return Err(FdError::arg("empty test set"));
    }
    let sse: f64 = a_test
        .row_iter()
        .zip(b_test)
        .map(|(row, &b)| {
            let r = linalg::dot(row, x) - b;
            r * r
        })
        .sum();
    Ok(sse / b_test.len() as f64)
}
