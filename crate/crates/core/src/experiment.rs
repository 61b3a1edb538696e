//! Experiment harness: single runs, sketch-size sweeps and timing benches
//! over any [`Sketcher`], with CSV reporting.
//!
//! Every run streams the training rows through a fresh sketcher (timed as
//! training), solves once (timed as query) and compares against the exact
//! ridge solution on the same data. Timed cells run one at a time.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{build_sketcher, Sketcher};
use crate::datagen::{gen_synthetic, Dataset, SyntheticSpec};
use crate::error::{FdError, Result};
use crate::ridge::{coef_error, pred_error, solve_exact, GramAccumulator, SolverTag};

/// One CSV row. The first twelve columns are the per-run measurements;
/// `total_time_s` is `train + query * n / ell` and `error` holds the failure
/// message of a run that did not complete. Mean rows carry `trial = "mean"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dataset_id: String,
    pub solver: String,
    pub ell: usize,
    pub gamma: f64,
    pub seed: u64,
    pub trial: String,
    pub coef_error: Option<f64>,
    pub pred_error: Option<f64>,
    pub train_time_s: Option<f64>,
    pub query_time_s: Option<f64>,
    pub n: usize,
    pub d: usize,
    pub total_time_s: Option<f64>,
    pub error: String,
}

pub const MEAN_TRIAL: &str = "mean";

impl ExperimentRecord {
    pub fn is_mean(&self) -> bool {
        self.trial == MEAN_TRIAL
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_empty()
    }
}

/// Seed for one (solver, trial) pair: a SplitMix64 step over the base seed,
/// the trial and the solver, so different solvers never share randomness.
pub fn trial_seed(base: u64, solver: SolverTag, trial: usize) -> u64 {
    let tag = SolverTag::ALL.iter().position(|t| *t == solver).unwrap_or(0) as u64;
    let mut z = base
        .wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The data under test with its exact ridge reference.
pub struct Workload<'a> {
    pub id: String,
    pub data: &'a Dataset,
    pub gamma: f64,
    reference: Vec<f64>,
}

impl<'a> Workload<'a> {
    pub fn new(id: impl Into<String>, data: &'a Dataset, gamma: f64) -> Result<Self> {
        let mut acc = GramAccumulator::new(data.dim())?;
        stream(&mut acc, data)?;
        let reference = solve_exact(&acc, gamma)?.x.into_vec();
        Ok(Self {
            id: id.into(),
            data,
            gamma,
            reference,
        })
    }

    /// The exact ridge coefficients at `gamma`.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }
}

fn stream(s: &mut dyn Sketcher, data: &Dataset) -> Result<()> {
    for (row, &y) in data.a_train.row_iter().zip(&data.b_train) {
        s.push(row, y)?;
    }
    s.flush()
}

/// Measurements of one completed run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub x: Vec<f64>,
    pub coef_error: f64,
    pub pred_error: f64,
    pub train_time_s: f64,
    pub query_time_s: f64,
}

/// Streams the training set through a fresh `solver` sketch and solves.
pub fn run_once(w: &Workload<'_>, solver: SolverTag, ell: usize, seed: u64) -> Result<RunOutcome> {
    let mut sketch = build_sketcher(solver, ell, w.data.dim(), seed)?;
    let t0 = Instant::now();
    stream(sketch.as_mut(), w.data)?;
    let train_time_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let solution = sketch.solve(w.gamma)?;
    let query_time_s = t1.elapsed().as_secs_f64();
    let x = solution.x.into_vec();
    let coef_error = if solver == SolverTag::Exact {
        0.0
    } else {
        coef_error(&x, &w.reference)?
    };
    let pred_error = pred_error(&w.data.a_test, &w.data.b_test, &x)?;
    Ok(RunOutcome {
        x,
        coef_error,
        pred_error,
        train_time_s,
        query_time_s,
    })
}

fn total_time(train: f64, query: f64, n: usize, ell: usize) -> f64 {
    train + query * n as f64 / ell.max(1) as f64
}

/// One record for `run_once`, with failures captured in the `error` column.
pub fn run_record(w: &Workload<'_>, solver: SolverTag, ell: usize, seed: u64, trial: usize) -> ExperimentRecord {
    outcome_record(w, solver, ell, seed, trial, &run_once(w, solver, ell, seed))
}

/// The record describing an already computed outcome.
pub fn outcome_record(
    w: &Workload<'_>,
    solver: SolverTag,
    ell: usize,
    seed: u64,
    trial: usize,
    outcome: &Result<RunOutcome>,
) -> ExperimentRecord {
    let mut rec = ExperimentRecord {
        dataset_id: w.id.clone(),
        solver: solver.to_string(),
        ell,
        gamma: w.gamma,
        seed,
        trial: trial.to_string(),
        coef_error: None,
        pred_error: None,
        train_time_s: None,
        query_time_s: None,
        n: w.data.n_train(),
        d: w.data.dim(),
        total_time_s: None,
        error: String::new(),
    };
    match outcome {
        Ok(out) => {
            rec.coef_error = Some(out.coef_error);
            rec.pred_error = Some(out.pred_error);
            rec.train_time_s = Some(out.train_time_s);
            rec.query_time_s = Some(out.query_time_s);
            rec.total_time_s = Some(total_time(out.train_time_s, out.query_time_s, rec.n, ell));
        }
        Err(e) => rec.error = e.to_string(),
    }
    rec
}

/// A sweep over solvers, sketch sizes and trials.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub solvers: Vec<SolverTag>,
    pub ells: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    /// Run seed-independent solvers (rr, fd, rfd, isvd) for one trial only;
    /// their errors would be identical across trials.
    pub deterministic_once: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() || self.ells.is_empty() {
            return Err(FdError::arg("sweep needs at least one solver and one ell"));
        }
        if self.ells.iter().any(|&l| l < 2) {
            return Err(FdError::arg("ell values must be >= 2"));
        }
        if self.trials == 0 {
            return Err(FdError::arg("trials must be >= 1"));
        }
        Ok(())
    }
}

fn mean_of(records: &[ExperimentRecord], pick: impl Fn(&ExperimentRecord) -> Option<f64>) -> Option<f64> {
    let values: Vec<f64> = records.iter().filter_map(&pick).collect();
    (!values.is_empty() && values.len() == records.len())
        .then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Aggregate row over successful and failed trials of one (solver, ell)
/// cell; a metric is only reported when every trial produced it.
pub fn mean_record(cell: &[ExperimentRecord], base_seed: u64) -> Option<ExperimentRecord> {
    let first = cell.first()?;
    let failures = cell.iter().filter(|r| !r.succeeded()).count();
    Some(ExperimentRecord {
        dataset_id: first.dataset_id.clone(),
        solver: first.solver.clone(),
        ell: first.ell,
        gamma: first.gamma,
        seed: base_seed,
        trial: MEAN_TRIAL.into(),
        coef_error: mean_of(cell, |r| r.coef_error),
        pred_error: mean_of(cell, |r| r.pred_error),
        train_time_s: mean_of(cell, |r| r.train_time_s),
        query_time_s: mean_of(cell, |r| r.query_time_s),
        n: first.n,
        d: first.d,
        total_time_s: mean_of(cell, |r| r.total_time_s),
        error: if failures > 0 {
            format!("{failures} of {} trials failed", cell.len())
        } else {
            String::new()
        },
    })
}

/// Runs the full factorial sweep, calling `on_record` as rows complete.
/// Per-trial rows come first within each (solver, ell) cell, followed by
/// its mean row.
pub fn sweep(
    w: &Workload<'_>,
    cfg: &SweepConfig,
    mut on_record: impl FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let mut all = Vec::new();
    for &solver in &cfg.solvers {
        for &ell in &cfg.ells {
            let trials = if cfg.deterministic_once && solver.is_deterministic() {
                1
            } else {
                cfg.trials
            };
            let mut cell = Vec::with_capacity(trials);
            for trial in 0..trials {
                let seed = trial_seed(cfg.base_seed, solver, trial);
                let rec = run_record(w, solver, ell, seed, trial);
                on_record(&rec);
                cell.push(rec);
            }
            if let Some(mean) = mean_record(&cell, cfg.base_seed) {
                on_record(&mean);
                cell.push(mean);
            }
            all.extend(cell);
        }
    }
    Ok(all)
}

/// Writes records as CSV with a header row.
pub fn write_records<W: Write>(records: &[ExperimentRecord], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(r).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

/// Streaming CSV writer for records produced one at a time.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(w: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(w),
        }
    }

    pub fn write(&mut self, r: &ExperimentRecord) -> Result<()> {
        self.inner.serialize(r).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_records<R: std::io::Read>(r: R) -> Result<Vec<ExperimentRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> FdError {
    FdError::Format {
        format: "CSV",
        reason: e.to_string(),
    }
}

// ---- timing benches ------------------------------------------------------

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub solvers: Vec<SolverTag>,
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub ells: Vec<usize>,
    pub gamma: f64,
    /// Measured repetitions per cell after one unmeasured warm-up.
    pub repeats: usize,
    pub seed: u64,
    pub rank_fraction: f64,
}

/// Median timings of one (solver, n, d, ell) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub solver: String,
    pub n: usize,
    pub d: usize,
    pub ell: usize,
    pub repeats: usize,
    pub train_time_s: f64,
    pub query_time_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Minimum wall time per query measurement; fast solves are repeated and
/// averaged until this much time has passed.
const MIN_QUERY_WINDOW_S: f64 = 0.02;

fn time_query(sketch: &dyn Sketcher, gamma: f64) -> Result<f64> {
    let start = Instant::now();
    let mut calls = 0u32;
    loop {
        std::hint::black_box(sketch.solve(gamma)?);
        calls += 1;
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= MIN_QUERY_WINDOW_S || calls >= 1000 {
            return Ok(elapsed / f64::from(calls));
        }
    }
}

/// Times one cell: a warm-up pass, then `repeats` measured passes.
pub fn bench_cell(data: &Dataset, solver: SolverTag, ell: usize, gamma: f64, repeats: usize, seed: u64) -> Result<BenchRecord> {
    let mut train = Vec::with_capacity(repeats);
    let mut query = Vec::with_capacity(repeats);
    for pass in 0..=repeats {
        let mut sketch = build_sketcher(solver, ell, data.dim(), seed)?;
        let t0 = Instant::now();
        stream(sketch.as_mut(), data)?;
        let t = t0.elapsed().as_secs_f64();
        let q = time_query(sketch.as_ref(), gamma)?;
        if pass > 0 {
            train.push(t);
            query.push(q);
        }
    }
    Ok(BenchRecord {
        solver: solver.to_string(),
        n: data.n_train(),
        d: data.dim(),
        ell,
        repeats,
        train_time_s: median(train),
        query_time_s: median(query),
    })
}

/// Times every (n, d, ell, solver) combination on synthetic data.
pub fn bench(cfg: &BenchConfig, mut on_record: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>> {
    if cfg.repeats == 0 || cfg.solvers.is_empty() || cfg.ns.is_empty() || cfg.ds.is_empty() || cfg.ells.is_empty() {
        return Err(FdError::arg("bench needs solvers, sizes and at least one repeat"));
    }
    let mut out = Vec::new();
    for &d in &cfg.ds {
        for &n in &cfg.ns {
            let mut spec = SyntheticSpec::new(n, d, cfg.rank_fraction, cfg.seed);
            spec.n_test = 1;
            let data = gen_synthetic(&spec)?;
            for &ell in &cfg.ells {
                for &solver in &cfg.solvers {
                    let rec = bench_cell(&data, solver, ell, cfg.gamma, cfg.repeats, cfg.seed)?;
                    on_record(&rec);
                    out.push(rec);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_bench<W: Write>(records: &[BenchRecord], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(r).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}
