//! Fixed-design risk of exact and sketched ridge estimators.
//!
//! Under `b = A x + s Z` with standard Gaussian `Z`, every estimator here is
//! linear in `b`: `x_hat = M^{-1} A^T b` with `M = A^T A + gamma I` (exact)
//! or `M = C^T C + gamma I` (sketched). Writing `G = A^T A`,
//!
//! ```text
//! bias^2   = || A (M^{-1} G - I) x ||^2 = w^T G w,     w = M^{-1} G x - x
//! variance = s^2 || A M^{-1} A^T ||_F^2 = s^2 tr(M^{-1} G M^{-1} G)
//! ```
//!
//! so nothing of size `n x n` is ever formed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{FdError, Result};
use crate::linalg::{self, Cholesky, DenseMatrix};
use crate::parallel;

/// Relative threshold below which `A` counts as column-rank deficient.
pub const FULL_RANK_CUTOFF: f64 = 1e-10;

/// The fixed-design model `b = A x_true + s Z`, with ridge parameter `gamma`.
#[derive(Clone, Debug)]
pub struct RiskModel {
    a: DenseMatrix,
    x_true: Vec<f64>,
    s: f64,
    gamma: f64,
    gram: DenseMatrix,
}

impl RiskModel {
    /// `gamma = 0` is accepted; the exact estimator then needs `A^T A`
    /// nonsingular.
    pub fn new(a: DenseMatrix, x_true: Vec<f64>, s: f64, gamma: f64) -> Result<Self> {
        if a.cols() != x_true.len() || a.rows() == 0 {
            return Err(FdError::arg(format!(
                "design {:?} and x_true of length {} disagree",
                a.shape(),
                x_true.len()
            )));
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(FdError::arg(format!("noise scale must be positive, got {s}")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(FdError::arg(format!("gamma must be non-negative, got {gamma}")));
        }
        if !a.is_finite() || x_true.iter().any(|v| !v.is_finite()) {
            return Err(FdError::input("non-finite model entries"));
        }
        let gram = a.gram();
        Ok(Self {
            a,
            x_true,
            s,
            gamma,
            gram,
        })
    }

    pub fn design(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn x_true(&self) -> &[f64] {
        &self.x_true
    }

    pub fn noise_scale(&self) -> f64 {
        self.s
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    /// `A^T A`.
    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    fn check_sketch(&self, gram_sketch: &DenseMatrix) -> Result<()> {
        let d = self.dim();
        if gram_sketch.shape() != (d, d) {
            return Err(FdError::arg(format!(
                "sketch Gram matrix is {:?}, expected {d}x{d}",
                gram_sketch.shape()
            )));
        }
        let scale = gram_sketch.max_abs().max(1.0);
        if gram_sketch.asymmetry() > 1e-10 * scale {
            return Err(FdError::arg("sketch Gram matrix is not symmetric"));
        }
        let eig = linalg::symmetric_eigenvalues(&gram_sketch.clone().symmetrized())?;
        let lambda_max = eig.first().copied().unwrap_or(0.0).max(0.0);
        if eig.last().copied().unwrap_or(0.0) < -1e-9 * lambda_max.max(1.0) {
            return Err(FdError::arg("sketch Gram matrix is not positive semidefinite"));
        }
        Ok(())
    }

    fn system(&self, gram: &DenseMatrix) -> Result<Cholesky> {
        Cholesky::new(&gram.add_diag(self.gamma)).map_err(|e| match e {
            FdError::Numeric(msg) => FdError::numeric(format!("ridge system is singular: {msg}")),
            other => other,
        })
    }

    /// Singular values of `A` (non-increasing).
    fn design_spectrum(&self) -> Result<Vec<f64>> {
        linalg::singular_values(&self.a)
    }
}

fn full_column_rank(spectrum: &[f64], d: usize) -> bool {
    match (spectrum.first(), spectrum.get(d.saturating_sub(1))) {
        (Some(&max), Some(&min)) if spectrum.len() >= d => min > FULL_RANK_CUTOFF * max,
        _ => false,
    }
}

/// Upper bounds attached to a sketched risk report. `None` marks a bound
/// whose preconditions fail.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RiskBounds {
    /// `(1 + ||A||_2^4 ||A^T A - C^T C||_2^2 / gamma^4) B^2(x_gamma)`.
    pub bias_bound: Option<f64>,
    /// `(1 + ||A||_2^2 / gamma)^2 V(x_gamma)`; needs full column rank.
    pub var_bound_main: Option<f64>,
    pub var_bound_l4: Option<f64>,
    pub var_bound_l5: Option<f64>,
    /// Set when `A` is column-rank deficient and the variance bounds were
    /// left out.
    pub rank_deficient: bool,
}

/// Squared bias, variance and their sum, plus optional bounds and (for
/// Monte-Carlo estimates) standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskReport {
    pub bias_sq: f64,
    pub variance: f64,
    pub risk: f64,
    pub bounds: RiskBounds,
    pub bias_sq_se: Option<f64>,
    pub variance_se: Option<f64>,
}

impl RiskReport {
    fn closed_form(bias_sq: f64, variance: f64) -> Self {
        let (bias_sq, variance) = (bias_sq.max(0.0), variance.max(0.0));
        Self {
            bias_sq,
            variance,
            risk: bias_sq + variance,
            bounds: RiskBounds::default(),
            bias_sq_se: None,
            variance_se: None,
        }
    }
}

/// `s^2 tr(P P)` with `P = M^{-1} G`.
fn variance_of(chol: &Cholesky, g: &DenseMatrix, s: f64) -> Result<f64> {
    let p = chol.solve_matrix(g)?;
    let d = p.rows();
    let mut tr = 0.0;
    for i in 0..d {
        for j in 0..d {
            tr += p.get(i, j) * p.get(j, i);
        }
    }
    Ok(s * s * tr)
}

fn quad(g: &DenseMatrix, v: &[f64]) -> Result<f64> {
    Ok(linalg::dot(v, &g.matvec(v)?))
}

/// Closed-form risk of the exact ridge estimator.
pub fn risk_exact(m: &RiskModel) -> Result<RiskReport> {
    let chol = m.system(&m.gram)?;
    // bias = -gamma A M^{-1} x
    let y = chol.solve(&m.x_true)?;
    let bias_sq = m.gamma * m.gamma * quad(&m.gram, &y)?;
    let variance = variance_of(&chol, &m.gram, m.s)?;
    Ok(RiskReport::closed_form(bias_sq, variance))
}

fn spectral_gap(m: &RiskModel, gram_sketch: &DenseMatrix) -> Result<f64> {
    let delta = m.gram.sub(gram_sketch)?.symmetrized();
    let eig = linalg::symmetric_eigenvalues(&delta)?;
    let hi = eig.first().copied().unwrap_or(0.0).abs();
    let lo = eig.last().copied().unwrap_or(0.0).abs();
    Ok(hi.max(lo))
}

/// Closed-form risk of the estimator built from a sketch Gram matrix
/// `C^T C`, with the bias bound and whichever variance bounds apply.
pub fn risk_sketch(m: &RiskModel, gram_sketch: &DenseMatrix) -> Result<RiskReport> {
    m.check_sketch(gram_sketch)?;
    let chol = m.system(gram_sketch)?;
    let gx = m.gram.matvec(&m.x_true)?;
    let mut w = chol.solve(&gx)?;
    linalg::axpy(-1.0, &m.x_true, &mut w);
    let bias_sq = quad(&m.gram, &w)?;
    let variance = variance_of(&chol, &m.gram, m.s)?;
    let mut report = RiskReport::closed_form(bias_sq, variance);

    let exact = risk_exact(m)?;
    let spectrum = m.design_spectrum()?;
    let a_norm = spectrum.first().copied().unwrap_or(0.0);
    let gap = spectral_gap(m, gram_sketch)?;
    let g = m.gamma;
    report.bounds.bias_bound = (g > 0.0)
        .then(|| (1.0 + a_norm.powi(4) * gap * gap / g.powi(4)) * exact.bias_sq);

    if full_column_rank(&spectrum, m.dim()) {
        let sigma_min = spectrum[m.dim() - 1];
        if g > 0.0 {
            report.bounds.var_bound_main = Some((1.0 + a_norm * a_norm / g).powi(2) * exact.variance);
        }
        report.bounds.var_bound_l4 = l4_from_parts(a_norm, sigma_min, gap, g, exact.variance);
        report.bounds.var_bound_l5 = l5_from_parts(sigma_min, gap, exact.variance);
    } else {
        report.bounds.rank_deficient = true;
    }
    Ok(report)
}

fn l4_from_parts(a_norm: f64, sigma_min: f64, gap: f64, gamma: f64, variance: f64) -> Option<f64> {
    if gamma <= 0.0 {
        return None;
    }
    let pinv_norm = 1.0 / sigma_min;
    Some((1.0 + a_norm * a_norm * gap * gap * pinv_norm * pinv_norm / gamma) * variance)
}

fn l5_from_parts(sigma_min: f64, gap: f64, variance: f64) -> Option<f64> {
    let denom = 1.0 - gap / (sigma_min * sigma_min);
    (denom > 0.0).then(|| variance / denom)
}

/// `(1 + ||A||_2^2 ||A^T A - C^T C||_2^2 ||A^+||_2^2 / gamma) V(x_gamma)`.
pub fn variance_bound_l4(m: &RiskModel, gram_sketch: &DenseMatrix) -> Result<f64> {
    m.check_sketch(gram_sketch)?;
    let spectrum = m.design_spectrum()?;
    if !full_column_rank(&spectrum, m.dim()) {
        return Err(FdError::Unsupported(
            "variance bound needs a design with full column rank".into(),
        ));
    }
    if m.gamma <= 0.0 {
        return Err(FdError::arg("variance bound needs gamma > 0"));
    }
    let exact = risk_exact(m)?;
    let gap = spectral_gap(m, gram_sketch)?;
    Ok(l4_from_parts(spectrum[0], spectrum[m.dim() - 1], gap, m.gamma, exact.variance)
        .expect("gamma checked positive"))
}

/// `V(x_gamma) / (1 - ||A^+||_2^2 ||C^T C - A^T A||_2)`, or `None` when `A`
/// is rank deficient or the denominator is not positive.
pub fn variance_bound_l5(m: &RiskModel, gram_sketch: &DenseMatrix) -> Result<Option<f64>> {
    m.check_sketch(gram_sketch)?;
    let spectrum = m.design_spectrum()?;
    if !full_column_rank(&spectrum, m.dim()) {
        return Ok(None);
    }
    let exact = risk_exact(m)?;
    let gap = spectral_gap(m, gram_sketch)?;
    Ok(l5_from_parts(spectrum[m.dim() - 1], gap, exact.variance))
}

/// A map from labels `b` to coefficients.
pub type LabelSolver = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Estimators the Monte-Carlo oracle can evaluate.
pub enum MonteCarloSolver {
    /// `(A^T A + gamma I)^{-1} A^T b`.
    Exact,
    /// `(C^T C + gamma I)^{-1} A^T b` for the given `C^T C`.
    SketchGram(DenseMatrix),
    /// Any map from labels `b` to coefficients.
    Custom(LabelSolver),
}

pub const MIN_TRIALS: usize = 100;

/// Empirical bias and variance over `trials` fresh noise draws.
///
/// Trial `t` draws its noise from a ChaCha8 stream `t` keyed by `seed`, so
/// the result is identical for any thread count. The squared-bias estimate
/// is corrected for the finite-sample spread of the mean.
pub fn risk_monte_carlo(
    m: &RiskModel,
    solver: &MonteCarloSolver,
    trials: usize,
    seed: u64,
) -> Result<RiskReport> {
    if trials < MIN_TRIALS {
        return Err(FdError::arg(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let system = match solver {
        MonteCarloSolver::Exact => Some(m.system(&m.gram)?),
        MonteCarloSolver::SketchGram(g) => {
            m.check_sketch(g)?;
            Some(m.system(g)?)
        }
        MonteCarloSolver::Custom(_) => None,
    };
    let clean = m.a.matvec(&m.x_true)?;
    let n = m.a.rows();
    let d = m.dim();

    let solve_trial = |t: usize| -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let b: Vec<f64> = clean
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + m.s * z
            })
            .collect();
        match (&system, solver) {
            (Some(chol), _) => chol.solve(&m.a.t_matvec(&b)?),
            (None, MonteCarloSolver::Custom(f)) => {
                let x = f(&b)?;
                if x.len() != d {
                    return Err(FdError::arg("custom solver returned the wrong dimension"));
                }
                Ok(x)
            }
            (None, _) => unreachable!("built-in solvers always have a factorization"),
        }
    };
    let samples: Vec<Vec<f64>> = parallel::map_indexed(trials, solve_trial)
        .into_iter()
        .collect::<Result<_>>()?;
    debug_assert_eq!(n, clean.len());

    let tf = trials as f64;
    let mut mean = vec![0.0; d];
    for x in &samples {
        linalg::axpy(1.0 / tf, x, &mut mean);
    }
    // Sample covariance of x_hat (d x d) and per-trial squared deviations in
    // prediction space.
    let mut cov = DenseMatrix::zeros(d, d);
    let mut dev_sq = Vec::with_capacity(trials);
    let mut dev = vec![0.0; d];
    for x in &samples {
        for ((o, xi), mi) in dev.iter_mut().zip(x).zip(&mean) {
            *o = xi - mi;
        }
        dev_sq.push(quad(&m.gram, &dev)?);
        for i in 0..d {
            let row = cov.row_mut(i);
            let di = dev[i] / (tf - 1.0);
            for j in 0..d {
                row[j] += di * dev[j];
            }
        }
    }
    let variance = dev_sq.iter().sum::<f64>() / (tf - 1.0);
    let var_spread = dev_sq.iter().map(|v| (v - variance).powi(2)).sum::<f64>() / (tf - 1.0);
    let variance_se = (var_spread / tf).sqrt();

    let mut offset = mean.clone();
    linalg::axpy(-1.0, &m.x_true, &mut offset);
    let raw_bias = quad(&m.gram, &offset)?;
    let bias_sq = (raw_bias - variance / tf).max(0.0);

    // Var(||A (mean - x)||^2) ~ 4 u^T S u / T + 2 tr(S^2) / T^2 with
    // S = A cov A^T; both terms reduce to d x d products.
    let g_offset = m.gram.matvec(&offset)?;
    let u_s_u = linalg::dot(&g_offset, &cov.matvec(&g_offset)?);
    let cg = cov.matmul(&m.gram)?;
    let mut tr_s2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            tr_s2 += cg.get(i, j) * cg.get(j, i);
        }
    }
    let bias_sq_se = (4.0 * u_s_u.max(0.0) / tf + 2.0 * tr_s2.max(0.0) / (tf * tf)).sqrt();

    Ok(RiskReport {
        bias_sq,
        variance,
        risk: bias_sq + variance,
        bounds: RiskBounds::default(),
        bias_sq_se: Some(bias_sq_se),
        variance_se: Some(variance_se),
    })
}
