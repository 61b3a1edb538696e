//! Dense linear algebra used by every sketch and solver.
//!
//! Storage is plain row-major `f64`. The heavy kernels (SVD, symmetric
//! eigendecomposition, Cholesky, products) are delegated to `faer`; this
//! module only converts at the boundary and enforces the numeric contracts
//! the rest of the crate relies on.

pub mod io;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::linalg::svd::{self, ComputeSvdVectors};
use faer::linalg::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Side};

use crate::error::{FdError, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Largest `d` for which a `d x d` matrix is materialized on request.
pub const MAX_MATERIALIZED_DIM: usize = 4096;

/// Row-major dense matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting bad lengths and
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FdError::input(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FdError::input(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(FdError::input("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(FdError::arg(format!(
                "cannot stack {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(FdError::arg(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Adds `s` to every diagonal entry.
    pub fn add_diag(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out.data[i * self.cols + i] += s;
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(FdError::arg(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(from_faer((self.as_faer() * other.as_faer()).as_ref()))
    }

    /// `self^T * self`, the Gram matrix of the rows.
    pub fn gram(&self) -> Self {
        let a = self.as_faer();
        from_faer((a.transpose() * a).as_ref()).symmetrized()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(FdError::arg(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, x)).collect())
    }

    /// `self^T * y`.
    pub fn t_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(FdError::arg(format!(
                "vector of length {} against {} rows",
                y.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &w) in self.row_iter().zip(y) {
            axpy(w, r, &mut out);
        }
        Ok(out)
    }

    /// Averages with the transpose; square matrices only.
    pub fn symmetrized(mut self) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
        self
    }

    /// Largest absolute asymmetry `|m_ij - m_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.rows.min(self.cols);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `self += rows^T * rows`.
    pub fn add_gram_of(&mut self, rows: &DenseMatrix) -> Result<()> {
        if self.rows != self.cols || rows.cols != self.cols {
            return Err(FdError::arg("Gram update shape mismatch"));
        }
        let r = rows.as_faer();
        let par = faer::get_global_parallelism();
        matmul::matmul(self.as_faer_mut(), Accum::Add, r.transpose(), r, 1.0, par);
        Ok(())
    }

    /// `self += lhs * rhs`.
    pub fn add_product(&mut self, lhs: &DenseMatrix, rhs: &DenseMatrix) -> Result<()> {
        if lhs.cols != rhs.rows || lhs.rows != self.rows || rhs.cols != self.cols {
            return Err(FdError::arg("product shape mismatch"));
        }
        let par = faer::get_global_parallelism();
        matmul::matmul(self.as_faer_mut(), Accum::Add, lhs.as_faer(), rhs.as_faer(), 1.0, par);
        Ok(())
    }

    pub(crate) fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn as_faer_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_row_major_slice_mut(&mut self.data, self.rows, self.cols)
    }
}

/// Dense vector with finite entries.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FdError::input("non-finite vector entry"));
        }
        Ok(Self(data))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl std::ops::Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn from_faer(m: MatRef<'_, f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition `m = U diag(s) V^T`.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// `r x d`, orthonormal rows.
    pub right_vectors: DenseMatrix,
    /// `n x r` when requested.
    pub left_vectors: Option<DenseMatrix>,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.iter().take_while(|&&s| s > 0.0).count()
    }
}

fn check_finite(m: &DenseMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(FdError::input("matrix has non-finite entries"))
    }
}

/// Thin SVD with left and right vectors.
pub fn thin_svd(m: &DenseMatrix) -> Result<ThinSvd> {
    svd_impl(m, true)
}

/// Thin SVD computing only singular values and right vectors; this is the
/// variant the streaming sketches use.
pub fn thin_svd_right(m: &DenseMatrix) -> Result<ThinSvd> {
    svd_impl(m, false)
}

fn svd_impl(m: &DenseMatrix, want_left: bool) -> Result<ThinSvd> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(ThinSvd {
            singular_values: Vec::new(),
            right_vectors: DenseMatrix::zeros(0, cols),
            left_vectors: want_left.then(|| DenseMatrix::zeros(rows, 0)),
        });
    }

    // Always factor a tall matrix; for wide inputs the roles of U and V swap.
    let wide = rows < cols;
    let a = if wide { m.as_faer().transpose() } else { m.as_faer() };
    let (tall_rows, tall_cols) = a.shape();
    let want_tall_u = if wide { true } else { want_left };

    let mut s = faer::diag::Diag::<f64>::zeros(r);
    let mut u = want_tall_u.then(|| Mat::<f64>::zeros(tall_rows, r));
    let mut v = (!wide || want_left).then(|| Mat::<f64>::zeros(tall_cols, r));
    let flag = |on: bool| {
        if on {
            ComputeSvdVectors::Thin
        } else {
            ComputeSvdVectors::No
        }
    };
    let par = faer::get_global_parallelism();
    let mut mem = MemBuffer::new(svd::svd_scratch::<f64>(
        tall_rows,
        tall_cols,
        flag(u.is_some()),
        flag(v.is_some()),
        par,
        Default::default(),
    ));
    svd::svd(
        a,
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        v.as_mut().map(|v| v.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| FdError::numeric(format!("SVD did not converge: {e:?}")))?;

    let mut values: Vec<f64> = s.column_vector().iter().copied().collect();
    let top = values.first().copied().unwrap_or(0.0);
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(FdError::numeric("SVD produced non-finite singular values"));
        }
        if *v <= RANK_CUTOFF * top {
            *v = 0.0;
        }
    }

    // right vectors of m, stored as rows (r x cols)
    let (right_cols, left_cols) = if wide { (u, v) } else { (v, u) };
    let right_vectors = match right_cols {
        Some(rv) => from_faer(rv.as_ref().transpose()),
        None => unreachable!("right vectors are always computed"),
    };
    let left_vectors = if want_left {
        left_cols.map(|lv| from_faer(lv.as_ref()))
    } else {
        None
    };
    Ok(ThinSvd {
        singular_values: values,
        right_vectors,
        left_vectors,
    })
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    check_finite(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let values = m
        .as_faer()
        .singular_values()
        .map_err(|e| FdError::numeric(format!("SVD did not converge: {e:?}")))?;
    Ok(values.first().copied().unwrap_or(0.0))
}

/// Singular values, non-increasing.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    check_finite(m)?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    m.as_faer()
        .singular_values()
        .map_err(|e| FdError::numeric(format!("SVD did not converge: {e:?}")))
}

/// `||m - m_k||_F^2`: the squared singular values beyond the top `k`.
pub fn squared_frobenius_tail(m: &DenseMatrix, k: usize) -> Result<f64> {
    let r = m.rows().min(m.cols());
    if k > r {
        return Err(FdError::arg(format!("k = {k} exceeds min(rows, cols) = {r}")));
    }
    let values = singular_values(m)?;
    Ok(tail_from_values(&values, k))
}

/// Tail mass from squared quantities already sorted non-increasing, e.g.
/// the eigenvalues of a Gram matrix.
pub fn tail_from_values(singular_values: &[f64], k: usize) -> f64 {
    // summed smallest-first so the tail stays accurate when it is tiny
    singular_values
        .iter()
        .skip(k)
        .rev()
        .map(|s| s * s)
        .sum()
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as rows, in the order of `values`.
    pub vectors: DenseMatrix,
}

pub fn symmetric_eigen(m: &DenseMatrix) -> Result<SymmetricEigen> {
    check_square(m)?;
    check_finite(m)?;
    let evd = m
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FdError::numeric(format!("eigendecomposition failed: {e:?}")))?;
    let n = m.rows();
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let values = (0..n).rev().map(|i| s[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| u[(j, n - 1 - i)]);
    Ok(SymmetricEigen { values, vectors })
}

/// Eigenvalues of a symmetric matrix, non-increasing.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    check_square(m)?;
    check_finite(m)?;
    let mut values = m
        .as_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| FdError::numeric(format!("eigendecomposition failed: {e:?}")))?;
    values.reverse();
    Ok(values)
}

fn check_square(m: &DenseMatrix) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(FdError::arg(format!("expected a square matrix, got {:?}", m.shape())));
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    dim: usize,
}

impl Cholesky {
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        check_square(m)?;
        check_finite(m)?;
        let llt = m
            .as_faer()
            .llt(Side::Lower)
            .map_err(|e| FdError::numeric(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Self {
            llt,
            dim: m.rows(),
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(FdError::arg(format!(
                "right-hand side of length {} for a {}-dimensional system",
                rhs.len(),
                self.dim
            )));
        }
        let b = Mat::<f64>::from_fn(self.dim, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        Ok((0..self.dim).map(|i| x[(i, 0)]).collect())
    }

    /// Solves against every column of `rhs`.
    pub fn solve_matrix(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if rhs.rows() != self.dim {
            return Err(FdError::arg("right-hand side row count mismatch"));
        }
        let x = self.llt.solve(rhs.as_faer());
        Ok(from_faer(x.as_ref()))
    }
}

/// Solves `m x = rhs` for symmetric positive-definite `m`.
pub fn solve_spd(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Cholesky::new(m)?.solve(rhs)
}
