//! `fdridge`: dataset generation, single runs, sketch-size sweeps, timing
//! benches and self-checks for streaming ridge regression.
//!
//! Exit codes: 0 on success, 1 on numeric failure (or failed checks), 2 on
//! usage and I/O errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fdridge::baselines::build_sketcher;
use fdridge::datagen::{
    default_gamma_grid, gen_synthetic, load_dataset, save_dataset, select_gamma, shingle_series, Dataset,
    SyntheticSpec,
};
use fdridge::experiment::{
    bench, outcome_record, run_once, sweep, BenchConfig, BenchRecord, RecordWriter, SweepConfig, Workload,
};
use fdridge::linalg::{io::read_csv, MAX_MATERIALIZED_DIM};
use fdridge::ridge::{lemma1_bound, GramAccumulator, SolverTag};
use fdridge::{verify, FdError};

#[derive(Parser)]
#[command(name = "fdridge", version, about = "Streaming ridge regression with matrix sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory (FDRM files plus manifest.json).
    Generate(GenerateArgs),
    /// Train and query one solver on a dataset; prints one CSV record.
    Run(RunArgs),
    /// Sweep solvers x sketch sizes x trials; writes CSV with mean rows.
    Sweep(SweepArgs),
    /// Time training and queries as n and d grow.
    Bench(BenchArgs),
    /// Check the sketch error bounds on seeded random corpora.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    /// Low rank: R = 0.1 d.
    Lr,
    /// High rank: R = 0.5 d.
    Hr,
    /// Shingled windows of a time series (needs --series).
    Shingle,
}

#[derive(Args)]
struct DataSource {
    /// Kind of data to generate.
    #[arg(long, value_enum, default_value = "hr")]
    kind: Kind,
    /// Dimension.
    #[arg(long, default_value_t = 256)]
    d: usize,
    /// Training rows.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Test rows (defaults to d).
    #[arg(long)]
    n_test: Option<usize>,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file with the series to shingle (all values, row by row).
    #[arg(long)]
    series: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: DataSource,
    /// Ridge parameter to store; selected on the test split when omitted.
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory.
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory.
    dataset: PathBuf,
    /// Solver: rr, fd, rfd, isvd, 2lfd, rp or cs.
    #[arg(long, value_parser = parse_solver)]
    solver: SolverTag,
    /// Sketch rows.
    #[arg(long)]
    ell: usize,
    /// Ridge parameter (defaults to the dataset's stored value).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset directory; when omitted data is generated from the flags.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    source: DataSource,
    /// Comma-separated solvers.
    #[arg(long, value_delimiter = ',', value_parser = parse_solver, default_value = "rr,fd,rfd,isvd,2lfd,rp,cs")]
    solvers: Vec<SolverTag>,
    /// Comma-separated sketch sizes.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256,512")]
    ell: Vec<usize>,
    /// Ridge parameter (defaults to the stored or selected value).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Run seed-independent solvers once instead of once per trial.
    #[arg(long)]
    deterministic_once: bool,
    /// CSV output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_solver, default_value = "rr,fd")]
    solvers: Vec<SolverTag>,
    /// Comma-separated training sizes.
    #[arg(long, value_delimiter = ',', default_value = "2048,4096")]
    n: Vec<usize>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_value = "1024,2048")]
    d: Vec<usize>,
    /// Comma-separated sketch sizes.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    ell: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Measured repetitions per cell (after one warm-up).
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, value_enum, default_value = "hr")]
    kind: Kind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random instances per suite.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_solver(s: &str) -> Result<SolverTag, String> {
    s.parse::<SolverTag>().map_err(|e| e.to_string())
}

/// Errors with their exit code.
enum Failure {
    Usage(String),
    Lib(FdError),
    Checks,
}

impl From<FdError> for Failure {
    fn from(e: FdError) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(e) if e.is_numeric() => 1,
            Failure::Checks => 1,
            _ => 2,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| FdError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn synthesize(src: &DataSource) -> CliResult<(Dataset, Option<SyntheticSpec>, String)> {
    let n_test = src.n_test.unwrap_or(src.d);
    match src.kind {
        Kind::Shingle => {
            let path = src
                .series
                .as_ref()
                .ok_or_else(|| Failure::Usage("--kind shingle needs --series <csv>".into()))?;
            let file = File::open(path).map_err(|e| FdError::io(path, e))?;
            let series = read_csv(file)?.into_vec();
            let data = shingle_series(&series, src.d, src.n, n_test, src.seed)?;
            let id = format!("shingle-d{}-n{}-s{}", src.d, src.n, src.seed);
            Ok((data, None, id))
        }
        Kind::Lr | Kind::Hr => {
            let (fraction, name) = match src.kind {
                Kind::Lr => (SyntheticSpec::LOW_RANK, "lr"),
                _ => (SyntheticSpec::HIGH_RANK, "hr"),
            };
            let mut spec = SyntheticSpec::new(src.n, src.d, fraction, src.seed);
            spec.n_test = n_test;
            let data = gen_synthetic(&spec)?;
            Ok((data, Some(spec), format!("{name}-d{}-n{}-s{}", src.d, src.n, src.seed)))
        }
    }
}

fn check_gamma(gamma: f64) -> CliResult<f64> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(gamma)
    } else {
        Err(Failure::Usage(format!("gamma must be positive, got {gamma}")))
    }
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let (data, spec, _) = synthesize(&args.source)?;
    let gamma = match args.gamma {
        Some(g) => check_gamma(g)?,
        None => select_gamma(&data, &default_gamma_grid())?,
    };
    let source = if spec.is_some() { "synthetic" } else { "shingled" };
    let manifest = save_dataset(&data, &args.out_dir, source, spec.as_ref(), args.source.seed, Some(gamma))?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn dataset_id(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn load_with_gamma(dir: &Path, flag: Option<f64>) -> CliResult<(Dataset, f64)> {
    let (data, manifest) = load_dataset(dir)?;
    let gamma = flag.or(manifest.gamma).ok_or_else(|| {
        Failure::Usage(format!("{} stores no gamma; pass --gamma", dir.display()))
    })?;
    Ok((data, check_gamma(gamma)?))
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let (data, gamma) = load_with_gamma(&args.dataset, args.gamma)?;
    let w = Workload::new(dataset_id(&args.dataset), &data, gamma)?;
    let outcome = run_once(&w, args.solver, args.ell, args.seed);
    let record = outcome_record(&w, args.solver, args.ell, args.seed, 0, &outcome);
    outcome?;
    let mut out = RecordWriter::new(output(args.out.as_deref())?);
    out.write(&record)?;
    drop(out);
    if args.solver != SolverTag::Exact && data.dim() <= MAX_MATERIALIZED_DIM {
        let mut sketch = build_sketcher(args.solver, args.ell, data.dim(), args.seed)?;
        let mut exact = GramAccumulator::new(data.dim())?;
        for (row, &y) in data.a_train.row_iter().zip(&data.b_train) {
            sketch.push(row, y)?;
            exact.push(row, y)?;
        }
        sketch.flush()?;
        exact.flush()?;
        let report = lemma1_bound(exact.gram()?, &sketch.gram_estimate()?, gamma, args.ell)?;
        eprintln!(
            "coef_error bound: {:.6e} (covariance error {:.6e}, sketch lambda_min {:.6e})",
            report.lemma1_factor, report.covariance_error, report.lambda_min_sketch
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let (data, id, gamma) = match &args.dataset {
        Some(dir) => {
            let (data, gamma) = load_with_gamma(dir, args.gamma)?;
            (data, dataset_id(dir), gamma)
        }
        None => {
            let (data, _, id) = synthesize(&args.source)?;
            let gamma = match args.gamma {
                Some(g) => check_gamma(g)?,
                None => select_gamma(&data, &default_gamma_grid())?,
            };
            (data, id, gamma)
        }
    };
    let cfg = SweepConfig {
        solvers: args.solvers,
        ells: args.ell,
        trials: args.trials,
        base_seed: args.source.seed,
        deterministic_once: args.deterministic_once,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let w = Workload::new(id, &data, gamma)?;
    let mut out = RecordWriter::new(output(args.out.as_deref())?);
    let mut write_error = None;
    let records = sweep(&w, &cfg, |r| {
        if write_error.is_none() {
            write_error = out.write(r).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let failed = records.iter().filter(|r| !r.is_mean() && !r.succeeded()).count();
    if failed > 0 {
        eprintln!("{failed} runs failed; see the error column");
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let rank_fraction = match args.kind {
        Kind::Lr => SyntheticSpec::LOW_RANK,
        Kind::Hr => SyntheticSpec::HIGH_RANK,
        Kind::Shingle => return Err(Failure::Usage("bench uses synthetic data (lr or hr)".into())),
    };
    let cfg = BenchConfig {
        solvers: args.solvers,
        ns: args.n,
        ds: args.d,
        ells: args.ell,
        gamma: check_gamma(args.gamma)?,
        repeats: args.repeats,
        seed: args.seed,
        rank_fraction,
    };
    let mut writer = csv::Writer::from_writer(output(args.out.as_deref())?);
    let mut write_error = None;
    bench(&cfg, |r: &BenchRecord| {
        if write_error.is_none() {
            write_error = writer.serialize(r).and_then(|_| Ok(writer.flush()?)).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(Failure::Usage(format!("writing bench output: {e}")));
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let checks = verify::run_all(args.trials, args.seed)?;
    let mut all = true;
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        all &= c.passed();
        println!(
            "{status} {}: {} cases, {} violations, worst {:.3e}",
            c.name, c.cases, c.violations, c.worst
        );
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Checks => eprintln!("error: some checks failed"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
