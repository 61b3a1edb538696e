//! Synthetic regression data, time-series shingling and ridge parameter
//! selection.
//!
//! Synthetic data: coordinate `i` (0-based) of every pre-rotation row is
//! `N(0, s_i^2)` with `s_i = exp(-i^2 / R^2)` and `R = floor(rank_fraction * d)`.
//! The first `R` entries of the true coefficients are standard normal, the
//! rest zero, and the vector is scaled to unit norm. Labels are
//! `b = A x + Z`, `Z ~ N(0, noise_var)`, computed before the rows are
//! rotated by the orthonormal DCT-II, `A_rot = A D^T`. The stored
//! coefficients are rotated the same way (`D x`) so that `b = A_rot x_rot + Z`
//! holds for the stored files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FdError, Result};
use crate::linalg::io::{read_fdrm, write_fdrm};
use crate::linalg::{self, DenseMatrix};
use crate::ridge::{solve_gram, GramAccumulator};

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// Test rows; defaults to `d`.
    pub n_test: usize,
    /// 0.1 for the low-rank (LR) profile, 0.5 for high-rank (HR).
    pub rank_fraction: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub const LOW_RANK: f64 = 0.1;
    pub const HIGH_RANK: f64 = 0.5;
    pub const NOISE_VAR: f64 = 4.0;

    pub fn new(n: usize, d: usize, rank_fraction: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            n_test: d,
            rank_fraction,
            noise_var: Self::NOISE_VAR,
            seed,
        }
    }

    /// `R = floor(rank_fraction * d)`.
    pub fn effective_rank(&self) -> usize {
        (self.rank_fraction * self.d as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.n_test == 0 {
            return Err(FdError::arg("n, d and n_test must be positive"));
        }
        if !(self.rank_fraction > 0.0 && self.rank_fraction <= 1.0) {
            return Err(FdError::arg(format!(
                "rank fraction must lie in (0, 1], got {}",
                self.rank_fraction
            )));
        }
        if self.effective_rank() < 1 {
            return Err(FdError::arg(format!(
                "rank fraction {} leaves R = 0 at d = {}",
                self.rank_fraction, self.d
            )));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(FdError::arg("noise variance must be finite and non-negative"));
        }
        Ok(())
    }

    /// Per-coordinate standard deviations `s_i`.
    pub fn column_scales(&self) -> Vec<f64> {
        let r = self.effective_rank() as f64;
        (0..self.d)
            .map(|i| (-((i * i) as f64) / (r * r)).exp())
            .collect()
    }
}

/// Train and test splits, with the generating coefficients when known.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub a_train: DenseMatrix,
    pub b_train: Vec<f64>,
    pub a_test: DenseMatrix,
    pub b_test: Vec<f64>,
    pub x_true: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        a_train: DenseMatrix,
        b_train: Vec<f64>,
        a_test: DenseMatrix,
        b_test: Vec<f64>,
        x_true: Option<Vec<f64>>,
    ) -> Result<Self> {
        if a_train.rows() != b_train.len() || a_test.rows() != b_test.len() {
            return Err(FdError::input("labels and rows disagree in count"));
        }
        if a_train.cols() != a_test.cols() {
            return Err(FdError::input("train and test widths differ"));
        }
        if x_true.as_ref().is_some_and(|x| x.len() != a_train.cols()) {
            return Err(FdError::input("x_true length differs from d"));
        }
        Ok(Self {
            a_train,
            b_train,
            a_test,
            b_test,
            x_true,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_train.cols()
    }

    pub fn n_train(&self) -> usize {
        self.a_train.rows()
    }

    pub fn n_test(&self) -> usize {
        self.a_test.rows()
    }
}

/// The orthonormal DCT-II matrix: `D[k][i] = a_k cos(pi (2i + 1) k / (2d))`
/// with `a_0 = sqrt(1/d)` and `a_k = sqrt(2/d)` otherwise.
pub fn dct_matrix(d: usize) -> DenseMatrix {
    let n = d as f64;
    DenseMatrix::from_fn(d, d, |k, i| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos()
    })
}

fn draw_rows(
    rng: &mut ChaCha8Rng,
    rows: usize,
    scales: &[f64],
    x: &[f64],
    noise: &Normal<f64>,
) -> (DenseMatrix, Vec<f64>) {
    let d = scales.len();
    let mut data = Vec::with_capacity(rows * d);
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let start = data.len();
        for &s in scales {
            let z: f64 = StandardNormal.sample(rng);
            data.push(s * z);
        }
        let clean = linalg::dot(&data[start..], x);
        labels.push(clean + noise.sample(rng));
    }
    let m = DenseMatrix::from_row_major(rows, d, data).expect("shape by construction");
    (m, labels)
}

/// Generates a synthetic dataset; identical specs give bit-identical data.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = spec.effective_rank();
    let mut x = vec![0.0; spec.d];
    for v in x.iter_mut().take(r) {
        *v = StandardNormal.sample(&mut rng);
    }
    let norm = linalg::norm(&x);
    if norm == 0.0 {
        return Err(FdError::numeric("drew an all-zero coefficient vector"));
    }
    x.iter_mut().for_each(|v| *v /= norm);

    let scales = spec.column_scales();
    let noise = Normal::new(0.0, spec.noise_var.sqrt())
        .map_err(|e| FdError::arg(format!("noise distribution: {e}")))?;
    let (a_train, b_train) = draw_rows(&mut rng, spec.n, &scales, &x, &noise);
    let (a_test, b_test) = draw_rows(&mut rng, spec.n_test, &scales, &x, &noise);

    let dct = dct_matrix(spec.d);
    let rotation = dct.transpose();
    let x_rot = dct.matvec(&x)?;
    Dataset::new(
        a_train.matmul(&rotation)?,
        b_train,
        a_test.matmul(&rotation)?,
        b_test,
        Some(x_rot),
    )
}

/// Builds a regression dataset from a scalar series: rows are `d`
/// consecutive differences and the label is the next difference. `n` train
/// and `n_test` test shingles are drawn without replacement.
pub fn shingle_series(series: &[f64], d: usize, n: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    if d == 0 || n == 0 || n_test == 0 {
        return Err(FdError::arg("d, n and n_test must be positive"));
    }
    if series.len() < d + n + n_test + 1 {
        return Err(FdError::arg(format!(
            "series of length {} is too short for d = {d}, n = {n}, n_test = {n_test}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(FdError::input("series has non-finite values"));
    }
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let available = diffs.len() - d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, available, n + n_test).into_vec();

    let build = |starts: &[usize]| -> Result<(DenseMatrix, Vec<f64>)> {
        let mut data = Vec::with_capacity(starts.len() * d);
        let mut labels = Vec::with_capacity(starts.len());
        for &s in starts {
            data.extend_from_slice(&diffs[s..s + d]);
            labels.push(diffs[s + d]);
        }
        Ok((DenseMatrix::from_row_major(starts.len(), d, data)?, labels))
    };
    let (a_train, b_train) = build(&picks[..n])?;
    let (a_test, b_test) = build(&picks[n..])?;
    Dataset::new(a_train, b_train, a_test, b_test, None)
}

/// Powers of two from `2^0` to `2^20`.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..=20).map(|p| 2f64.powi(p)).collect()
}

/// Test residual `||A_test x - b_test||` of the exact ridge solution for
/// every grid value, in grid order.
pub fn gamma_residuals(data: &Dataset, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(FdError::arg("gamma grid is empty"));
    }
    if grid.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(FdError::arg("gamma grid values must be positive"));
    }
    let mut acc = GramAccumulator::new(data.dim())?;
    for (row, &y) in data.a_train.row_iter().zip(&data.b_train) {
        acc.push(row, y)?;
    }
    acc.flush()?;
    grid.iter()
        .map(|&g| {
            let x = solve_gram(acc.gram()?, acc.c(), g)?;
            let sse: f64 = data
                .a_test
                .row_iter()
                .zip(&data.b_test)
                .map(|(row, &b)| (linalg::dot(row, &x) - b).powi(2))
                .sum();
            Ok((g, sse.sqrt()))
        })
        .collect()
}

/// The grid value whose exact solution has the smallest test residual;
/// ties go to the smaller value.
pub fn select_gamma(data: &Dataset, grid: &[f64]) -> Result<f64> {
    let scored = gamma_residuals(data, grid)?;
    let mut best = scored[0];
    for &(g, r) in &scored[1..] {
        if r < best.1 || (r == best.1 && g < best.0) {
            best = (g, r);
        }
    }
    Ok(best.0)
}

// ---- on-disk layout ---------------------------------------------------------

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "fdridge-dataset";

/// `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// `"synthetic"` or `"shingled"`.
    pub source: String,
    pub spec: Option<SyntheticSpec>,
    /// Number of decaying column scales `R`, for synthetic data.
    #[serde(default)]
    pub effective_rank: Option<usize>,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub files: Vec<String>,
    /// SHA-256 over the data files in `files` order.
    pub sha256: String,
    /// Ridge parameter chosen for this dataset, if any.
    pub gamma: Option<f64>,
}

fn column(v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_row_major(v.len(), 1, v.to_vec()).expect("finite labels")
}

fn encode(m: &DenseMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_fdrm(m, &mut buf)?;
    Ok(buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FdError::io(path, e))
}

/// Writes the dataset as FDRM files plus a manifest into `dir` (created if
/// needed) and returns the manifest.
pub fn save_dataset(
    data: &Dataset,
    dir: &Path,
    source: &str,
    spec: Option<&SyntheticSpec>,
    seed: u64,
    gamma: Option<f64>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| FdError::io(dir, e))?;
    let mut parts: Vec<(&str, DenseMatrix)> = vec![
        ("a_train.fdrm", data.a_train.clone()),
        ("b_train.fdrm", column(&data.b_train)),
        ("a_test.fdrm", data.a_test.clone()),
        ("b_test.fdrm", column(&data.b_test)),
    ];
    if let Some(x) = &data.x_true {
        parts.push(("x_true.fdrm", column(x)));
    }
    let mut hasher = Sha256::new();
    let mut files = Vec::new();
    for (name, m) in &parts {
        let bytes = encode(m)?;
        hasher.update(&bytes);
        write_file(&dir.join(name), &bytes)?;
        files.push(name.to_string());
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        source: source.into(),
        spec: spec.cloned(),
        effective_rank: spec.map(SyntheticSpec::effective_rank),
        seed,
        n_train: data.n_train(),
        n_test: data.n_test(),
        d: data.dim(),
        files,
        sha256: hex::encode(hasher.finalize()),
        gamma,
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| FdError::Format { format: "manifest", reason: e.to_string() })?;
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| FdError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| FdError::Format { format: "manifest", reason: e.to_string() })?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != 1 {
        return Err(FdError::Format {
            format: "manifest",
            reason: format!("unsupported format {} v{}", manifest.format, manifest.version),
        });
    }
    Ok(manifest)
}

fn vector(m: DenseMatrix, name: &str) -> Result<Vec<f64>> {
    if m.cols() != 1 {
        return Err(FdError::Format {
            format: "dataset",
            reason: format!("{name} must be a single column"),
        });
    }
    Ok(m.into_vec())
}

/// Loads a dataset directory, checking the manifest hash.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut hasher = Sha256::new();
    let mut get = |name: &str| -> Result<Option<DenseMatrix>> {
        if !manifest.files.iter().any(|f| f == name) {
            return Ok(None);
        }
        let path: PathBuf = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| FdError::io(&path, e))?;
        hasher.update(&bytes);
        Ok(Some(read_fdrm(bytes.as_slice())?))
    };
    let missing = |name: &str| FdError::Format {
        format: "dataset",
        reason: format!("manifest lacks {name}"),
    };
    let a_train = get("a_train.fdrm")?.ok_or_else(|| missing("a_train.fdrm"))?;
    let b_train = vector(get("b_train.fdrm")?.ok_or_else(|| missing("b_train.fdrm"))?, "b_train")?;
    let a_test = get("a_test.fdrm")?.ok_or_else(|| missing("a_test.fdrm"))?;
    let b_test = vector(get("b_test.fdrm")?.ok_or_else(|| missing("b_test.fdrm"))?, "b_test")?;
    let x_true = get("x_true.fdrm")?.map(|m| vector(m, "x_true")).transpose()?;
    let digest = hex::encode(hasher.finalize());
    if digest != manifest.sha256 {
        return Err(FdError::Format {
            format: "dataset",
            reason: "data files do not match the manifest hash".into(),
        });
    }
    let data = Dataset::new(a_train, b_train, a_test, b_test, x_true)?;
    Ok((data, manifest))
}

#[cfg(test)]
mod tests;
