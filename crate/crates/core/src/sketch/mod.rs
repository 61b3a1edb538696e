//! Streaming Frequent Directions (FD) and Robust Frequent Directions (RFD).
//!
//! The sketch keeps `sigma` and `v_rows` with `B = diag(sigma) * v_rows`
//! rather than `B` itself, so ridge solutions can be read off without a
//! further factorization. Rows arrive one at a time and are buffered; every
//! `ell` rows the buffer is stacked under `B` and the stack is reduced back
//! to `ell` rows:
//!
//! ```text
//! svd([B; batch]) = (s', V')
//! sigma_i = sqrt(max(0, s'_i^2 - s'_{ell+1}^2)),  v_i = V'_i,  i = 1..ell
//! ```
//!
//! RFD additionally accumulates `alpha += s'_{ell+1}^2 / 2`, which the solver
//! adds to the ridge parameter. The truncated incremental SVD baseline shares
//! the same machinery with the shrink step removed.

pub mod codec;

use crate::error::{FdError, Result};
use crate::linalg::{self, DenseMatrix, ThinSvd, MAX_MATERIALIZED_DIM};

/// How the top `ell` singular values are updated after each reduce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Subtract `s'_{ell+1}^2` from every kept squared value.
    Fd,
    /// As `Fd`, and accumulate half the subtracted mass in `alpha`.
    Rfd,
    /// Keep the top `ell` values unshrunk.
    Isvd,
}

/// Outcome of one reduce step, exposing what was removed from the stack:
/// component `i` of `svd` lost `min(s'_i^2, shrink)` of its squared mass.
#[derive(Debug)]
pub(crate) struct Reduction {
    /// Full SVD of the stacked matrix.
    pub svd: ThinSvd,
    /// `s'_{ell+1}^2`, zero when the stack had rank at most `ell`.
    pub shrink: f64,
}

/// Streaming state shared by FD, RFD and truncated incremental SVD.
#[derive(Clone, Debug)]
pub struct FdSketch {
    variant: Variant,
    ell: usize,
    d: usize,
    sigma: Vec<f64>,
    v_rows: DenseMatrix,
    c: Vec<f64>,
    pending: Vec<f64>,
    n_seen: u64,
    alpha: f64,
}

impl FdSketch {
    /// An empty FD sketch with `ell` rows over `d` features.
    pub fn new(ell: usize, d: usize) -> Result<Self> {
        Self::with_variant(Variant::Fd, ell, d)
    }

    /// An empty RFD sketch.
    pub fn new_robust(ell: usize, d: usize) -> Result<Self> {
        Self::with_variant(Variant::Rfd, ell, d)
    }

    /// An empty truncated incremental SVD sketch (no shrinkage).
    pub fn new_isvd(ell: usize, d: usize) -> Result<Self> {
        Self::with_variant(Variant::Isvd, ell, d)
    }

    pub fn with_variant(variant: Variant, ell: usize, d: usize) -> Result<Self> {
        if ell < 2 {
            return Err(FdError::arg(format!("sketch size ell must be >= 2, got {ell}")));
        }
        if d < 1 {
            return Err(FdError::arg("feature dimension d must be >= 1"));
        }
        Ok(Self {
            variant,
            ell,
            d,
            sigma: vec![0.0; ell],
            v_rows: DenseMatrix::zeros(ell, d),
            c: vec![0.0; d],
            pending: Vec::with_capacity(ell * d),
            n_seen: 0,
            alpha: 0.0,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        variant: Variant,
        ell: usize,
        d: usize,
        n_seen: u64,
        alpha: f64,
        sigma: Vec<f64>,
        v_rows: DenseMatrix,
        c: Vec<f64>,
    ) -> Result<Self> {
        let mut s = Self::with_variant(variant, ell, d)?;
        if sigma.len() != ell || v_rows.shape() != (ell, d) || c.len() != d {
            return Err(FdError::input("sketch component shapes disagree with header"));
        }
        if sigma.iter().any(|&v| !(v >= 0.0 && v.is_finite())) || !(alpha >= 0.0) {
            return Err(FdError::input("sketch values must be finite and non-negative"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(FdError::input("non-finite entry in c"));
        }
        s.n_seen = n_seen;
        s.alpha = alpha;
        s.sigma = sigma;
        s.v_rows = v_rows;
        s.c = c;
        Ok(s)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Right singular vectors as rows; unused slots are zero rows.
    pub fn v_rows(&self) -> &DenseMatrix {
        &self.v_rows
    }

    /// The running `A^T b`.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Half the cumulative shrinkage; always zero unless the variant is RFD.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn pending_rows(&self) -> usize {
        self.pending.len() / self.d
    }

    pub fn is_flushed(&self) -> bool {
        self.pending.is_empty()
    }

    /// Adds one labelled row. `c` is updated immediately; the row itself is
    /// buffered until `ell` rows are pending.
    pub fn push(&mut self, row: &[f64], label: f64) -> Result<()> {
        if row.len() != self.d {
            return Err(FdError::arg(format!(
                "row has {} entries, sketch dimension is {}",
                row.len(),
                self.d
            )));
        }
        if !label.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(FdError::input("non-finite row or label"));
        }
        linalg::axpy(label, row, &mut self.c);
        self.pending.extend_from_slice(row);
        self.n_seen += 1;
        if self.pending_rows() == self.ell {
            self.reduce_pending()?;
        }
        Ok(())
    }

    /// Reduces whatever is buffered, even a partial batch.
    pub fn flush(&mut self) -> Result<()> {
        if !self.pending.is_empty() {
            self.reduce_pending()?;
        }
        Ok(())
    }

    fn reduce_pending(&mut self) -> Result<()> {
        let rows = self.pending_rows();
        let data = std::mem::take(&mut self.pending);
        let batch = DenseMatrix::from_row_major(rows, self.d, data)?;
        let result = self.reduce(&batch);
        let mut buf = batch.into_vec();
        buf.clear();
        self.pending = buf;
        result.map(|_| ())
    }

    /// Folds an explicit batch of rows into the sketch. The labels are not
    /// known here, so `c` is left alone; `n_seen` counts the rows.
    pub fn reduce_step(&mut self, batch: &DenseMatrix) -> Result<()> {
        if batch.cols() != self.d {
            return Err(FdError::arg(format!(
                "batch has {} columns, sketch dimension is {}",
                batch.cols(),
                self.d
            )));
        }
        self.reduce_counted(batch).map(|_| ())
    }

    /// `reduce_step` that also hands back what the reduce discarded.
    pub(crate) fn reduce_counted(&mut self, batch: &DenseMatrix) -> Result<Reduction> {
        let reduction = self.reduce(batch)?;
        self.n_seen += batch.rows() as u64;
        Ok(reduction)
    }

    /// `diag(sigma) * v_rows`, restricted to rows with nonzero sigma.
    pub fn sketch_rows(&self) -> DenseMatrix {
        let live = self.sigma.iter().take_while(|&&s| s > 0.0).count();
        let mut b = DenseMatrix::zeros(live, self.d);
        for i in 0..live {
            let s = self.sigma[i];
            for (dst, &v) in b.row_mut(i).iter_mut().zip(self.v_rows.row(i)) {
                *dst = s * v;
            }
        }
        b
    }

    pub(crate) fn reduce(&mut self, batch: &DenseMatrix) -> Result<Reduction> {
        let stacked = self.sketch_rows().vstack(batch)?;
        let svd = linalg::thin_svd_right(&stacked)?;
        let values = &svd.singular_values;
        let shrink = match self.variant {
            Variant::Isvd => 0.0,
            _ => values.get(self.ell).map_or(0.0, |s| s * s),
        };
        let kept = values.len().min(self.ell);
        let mut sigma = vec![0.0; self.ell];
        let mut v_rows = DenseMatrix::zeros(self.ell, self.d);
        for i in 0..kept {
            sigma[i] = (values[i] * values[i] - shrink).max(0.0).sqrt();
            v_rows.row_mut(i).copy_from_slice(svd.right_vectors.row(i));
        }
        self.sigma = sigma;
        self.v_rows = v_rows;
        if self.variant == Variant::Rfd {
            self.alpha += shrink / 2.0;
        }
        Ok(Reduction { svd, shrink })
    }

    /// Combines two flushed sketches of disjoint streams into a sketch of
    /// their concatenation by replaying the second sketch's rows as a batch.
    pub fn merge(&self, other: &FdSketch) -> Result<FdSketch> {
        if self.ell != other.ell || self.d != other.d || self.variant != other.variant {
            return Err(FdError::arg(format!(
                "cannot merge {:?}(ell={}, d={}) with {:?}(ell={}, d={})",
                self.variant, self.ell, self.d, other.variant, other.ell, other.d
            )));
        }
        if !self.is_flushed() || !other.is_flushed() {
            return Err(FdError::State("merge requires flushed sketches".into()));
        }
        let mut out = self.clone();
        let rows = other.sketch_rows();
        if rows.rows() > 0 {
            out.reduce(&rows)?;
        }
        linalg::axpy(1.0, &other.c, &mut out.c);
        out.alpha += other.alpha;
        out.n_seen += other.n_seen;
        Ok(out)
    }

    /// Materializes `B^T B = V diag(sigma^2) V^T`. Test and diagnostics only.
    pub fn covariance(&self) -> Result<DenseMatrix> {
        if self.d > MAX_MATERIALIZED_DIM {
            return Err(FdError::Refused(format!(
                "covariance of dimension {} exceeds the {} limit",
                self.d, MAX_MATERIALIZED_DIM
            )));
        }
        Ok(self.sketch_rows().gram())
    }

    /// The sketch's approximation of `A^T A`: `B^T B`, plus `alpha I` for RFD.
    pub fn gram_estimate(&self) -> Result<DenseMatrix> {
        Ok(self.covariance()?.add_diag(self.alpha))
    }
}

#[cfg(test)]
mod tests;
