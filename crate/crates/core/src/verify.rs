//! Self-checks of the sketch guarantees on seeded random corpora, as run by
//! `fdridge verify`. Each suite reports how many cases it checked and the
//! worst slack it saw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{self, DenseMatrix};
use crate::ridge::{coef_error, lemma1_bound, solve_from_sketch, solve_gram, GramAccumulator};
use crate::sketch::FdSketch;

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub violations: usize,
    /// Largest observed `measured / allowed` ratio (or error, for the
    /// identity checks).
    pub worst: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.violations == 0
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn sketch_of(a: &DenseMatrix, b: &[f64], mut s: FdSketch) -> Result<FdSketch> {
    for (row, &y) in a.row_iter().zip(b) {
        s.push(row, y)?;
    }
    s.flush()?;
    Ok(s)
}

const ELLS: [usize; 3] = [5, 10, 15];

/// `0 <= A^T A - estimate <= tail_k / (divisor * (ell - k)) I` for every
/// `k < ell`, on `instances` Gaussian `200 x 30` matrices.
fn covariance_suite(name: &'static str, instances: usize, seed: u64, robust: bool) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = Check { name, cases: 0, violations: 0, worst: 0.0 };
    for _ in 0..instances {
        let a = gaussian(&mut rng, 200, 30);
        let b = vec![0.0; 200];
        let gram = a.gram();
        let values = linalg::singular_values(&a)?;
        for ell in ELLS {
            let sketch = if robust {
                sketch_of(&a, &b, FdSketch::new_robust(ell, 30)?)?
            } else {
                sketch_of(&a, &b, FdSketch::new(ell, 30)?)?
            };
            let diff = gram.sub(&sketch.gram_estimate()?)?.symmetrized();
            let eigs = linalg::symmetric_eigenvalues(&diff)?;
            let (top, bottom) = (eigs[0], eigs[eigs.len() - 1]);
            let (spectral, divisor) = if robust { (top.max(-bottom), 2.0) } else { (top, 1.0) };
            for k in 0..ell {
                let allowed = linalg::tail_from_values(&values, k) / (divisor * (ell - k) as f64);
                check.cases += 1;
                check.worst = check.worst.max(spectral / allowed);
                if spectral > allowed + 1e-9 || (!robust && bottom < -1e-9) {
                    check.violations += 1;
                }
            }
        }
    }
    Ok(check)
}

/// The sketch solve against a dense solve of `(B^T B + gamma I) x = c`.
fn solve_identity_suite(instances: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = Check { name: "sketch solve identity", cases: 0, violations: 0, worst: 0.0 };
    for _ in 0..instances {
        let d = rng.random_range(2..25);
        let n = rng.random_range(1..80);
        let ell = rng.random_range(2..=d + 2);
        let gamma = 10f64.powf(rng.random_range(-2.0..3.0));
        let a = gaussian(&mut rng, n, d);
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let sketch = sketch_of(&a, &b, FdSketch::new(ell, d)?)?;
        let fast = solve_from_sketch(&sketch, gamma)?.x.into_vec();
        let dense = solve_gram(&sketch.covariance()?, sketch.c(), gamma)?;
        let err = coef_error(&fast, &dense)?;
        check.cases += 1;
        check.worst = check.worst.max(err);
        if err > 1e-8 {
            check.violations += 1;
        }
    }
    Ok(check)
}

/// Measured coefficient error never exceeds the reported bound factor.
fn coefficient_bound_suite(instances: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = Check { name: "coefficient error bound", cases: 0, violations: 0, worst: 0.0 };
    for _ in 0..instances {
        let (n, d) = (rng.random_range(20..120), rng.random_range(4..20));
        let ell = rng.random_range(2..d);
        let gamma = 10f64.powf(rng.random_range(-1.0..2.0));
        let a = gaussian(&mut rng, n, d);
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let sketch = sketch_of(&a, &b, FdSketch::new(ell, d)?)?;
        let report = lemma1_bound(&a.gram(), &sketch.gram_estimate()?, gamma, ell)?;
        let exact = solve_gram(&a.gram(), sketch.c(), gamma)?;
        let err = coef_error(&solve_from_sketch(&sketch, gamma)?.x.into_vec(), &exact)?;
        check.cases += 1;
        check.worst = check.worst.max(err / report.lemma1_factor.max(f64::MIN_POSITIVE));
        if err > report.lemma1_factor * (1.0 + 1e-9) + 1e-12 {
            check.violations += 1;
        }
    }
    Ok(check)
}

/// Streams of rank below `ell` are recovered exactly for any gamma.
fn exact_recovery_suite(instances: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = Check { name: "exact recovery below rank ell", cases: 0, violations: 0, worst: 0.0 };
    for _ in 0..instances {
        let d = rng.random_range(4..30);
        let ell = rng.random_range(2..=d);
        let rank = rng.random_range(1..ell);
        let n = rng.random_range(rank..200);
        let a = gaussian(&mut rng, n, rank).matmul(&gaussian(&mut rng, rank, d))?;
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let sketch = sketch_of(&a, &b, FdSketch::new(ell, d)?)?;
        let mut acc = GramAccumulator::new(d)?;
        for (row, &y) in a.row_iter().zip(&b) {
            acc.push(row, y)?;
        }
        acc.flush()?;
        for gamma in [1e-3, 1.0, 1e3] {
            let exact = solve_gram(acc.gram()?, acc.c(), gamma)?;
            let err = coef_error(&solve_from_sketch(&sketch, gamma)?.x.into_vec(), &exact)?;
            check.cases += 1;
            check.worst = check.worst.max(err);
            if err > 1e-6 {
                check.violations += 1;
            }
        }
    }
    Ok(check)
}

/// Runs every suite with `instances` random cases each.
pub fn run_all(instances: usize, seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        covariance_suite("fd covariance bound", instances, seed, false)?,
        covariance_suite("robust fd covariance bound", instances, seed, true)?,
        solve_identity_suite(instances, seed)?,
        coefficient_bound_suite(instances, seed)?,
        exact_recovery_suite(instances, seed)?,
    ])
}
