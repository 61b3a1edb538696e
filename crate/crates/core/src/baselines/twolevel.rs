//! Two-level Frequent Directions: a small FD sketch `B` with `3k` rows plus
//! `Q`, a random sample of what `B` discards.
//!
//! Every reduce of `B` removes squared mass `w_i = min(s'_i^2, delta)` along
//! each right singular vector `v_i` of the stacked matrix, where `delta` is
//! the shrinkage. `Q` keeps `q_cap` independent weighted reservoirs over all
//! removed `(w_i, v_i)`; with `W` the total removed weight, each row of `Q`
//! is `sqrt(W / q_cap) v` for the vector its reservoir currently holds, so
//! `E[Q^T Q]` is exactly the removed mass and `tr(Q^T Q) = W`.
//!
//! The total budget `ell = 3k + q_cap` matches the FD sketch size it is
//! compared with; `k` defaults to `max(1, floor(ell / 6))`.
//!
//! `FDSK` body: `u64 k`, `B`'s `sigma` (3k f64) and `v_rows` (3k*d f64),
//! `c` (d f64), `f64 W`, the `q_cap x d` unit reservoir vectors, `u64 seed`
//! and the `u128` ChaCha8 word position.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sketcher;
use crate::error::{FdError, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};
use crate::ridge::{solve_spectral, RidgeSolution, SolverTag};
use crate::sketch::codec::{self, Header, SketchKind};
use crate::sketch::{FdSketch, Reduction, Variant};

#[derive(Clone, Debug)]
pub struct TwoLevelSketch {
    ell: usize,
    d: usize,
    k: usize,
    b: FdSketch,
    slots: DenseMatrix,
    total_weight: f64,
    c: Vec<f64>,
    pending: Vec<f64>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl TwoLevelSketch {
    /// `k = None` picks `max(1, floor(ell / 6))`. Requires `3k < ell`.
    pub fn new(ell: usize, d: usize, k: Option<usize>, seed: u64) -> Result<Self> {
        let k = k.unwrap_or((ell / 6).max(1));
        if k == 0 || 3 * k >= ell {
            return Err(FdError::arg(format!(
                "two-level sketch needs 1 <= k and 3k < ell, got k = {k}, ell = {ell}"
            )));
        }
        Ok(Self {
            ell,
            d,
            k,
            b: FdSketch::new(3 * k, d)?,
            slots: DenseMatrix::zeros(ell - 3 * k, d),
            total_weight: 0.0,
            c: vec![0.0; d],
            pending: Vec::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q_cap(&self) -> usize {
        self.slots.rows()
    }

    /// The deterministic first level.
    pub fn first_level(&self) -> &FdSketch {
        &self.b
    }

    /// Total squared mass removed from the first level so far.
    pub fn removed_weight(&self) -> f64 {
        self.total_weight
    }

    /// `Q`: scaled reservoir rows, empty until something has been removed.
    pub fn q_rows(&self) -> DenseMatrix {
        if self.total_weight <= 0.0 {
            return DenseMatrix::zeros(0, self.d);
        }
        self.slots
            .scale((self.total_weight / self.q_cap() as f64).sqrt())
    }

    pub fn is_flushed(&self) -> bool {
        self.pending.is_empty()
    }

    /// Folds an explicit batch into both levels; `c` is left alone.
    pub fn reduce_step(&mut self, batch: &DenseMatrix) -> Result<()> {
        if batch.cols() != self.d {
            return Err(FdError::arg("batch width differs from the sketch dimension"));
        }
        let reduction = self.b.reduce_counted(batch)?;
        self.absorb(&reduction);
        Ok(())
    }

    fn absorb(&mut self, reduction: &Reduction) {
        let delta = reduction.shrink;
        if delta <= 0.0 {
            return;
        }
        let vectors = &reduction.svd.right_vectors;
        for (i, &s) in reduction.svd.singular_values.iter().enumerate() {
            let w = (s * s).min(delta);
            if w <= 0.0 {
                continue;
            }
            self.total_weight += w;
            let p = w / self.total_weight;
            for j in 0..self.slots.rows() {
                if self.rng.random::<f64>() < p {
                    self.slots.row_mut(j).copy_from_slice(vectors.row(i));
                }
            }
        }
    }

    fn reduce_pending(&mut self) -> Result<()> {
        let rows = self.pending.len() / self.d;
        let batch = DenseMatrix::from_row_major(rows, self.d, std::mem::take(&mut self.pending))?;
        let result = self.reduce_step(&batch);
        let mut buf = batch.into_vec();
        buf.clear();
        self.pending = buf;
        result
    }

    /// `[B; Q]`, the rows whose Gram matrix is the sketch estimate.
    pub fn combined_rows(&self) -> Result<DenseMatrix> {
        self.b.sketch_rows().vstack(&self.q_rows())
    }

    pub(crate) fn read_body<R: Read>(r: &mut R, h: &Header) -> Result<Self> {
        if h.kind != SketchKind::TwoLevel {
            return Err(codec::bad(format!("{:?} is not a two-level sketch", h.kind)));
        }
        let (ell, d) = (h.ell as usize, h.d as usize);
        let k = codec::get_u64(r)? as usize;
        if k == 0 || k.saturating_mul(3) >= ell {
            return Err(codec::bad("inconsistent two-level sizes"));
        }
        let sigma = codec::get_f64s(r, 3 * k)?;
        let v_rows = codec::get_matrix(r, 3 * k, d)?;
        let c = codec::get_f64s(r, d)?;
        let total_weight = codec::get_f64(r)?;
        let slots = codec::get_matrix(r, ell - 3 * k, d)?;
        let seed = codec::get_u64(r)?;
        let word_pos = codec::get_u128(r)?;
        if !(total_weight >= 0.0) || c.iter().any(|v| !v.is_finite()) {
            return Err(codec::bad("invalid two-level state"));
        }
        let mut s = Self::new(ell, d, Some(k), seed)?;
        s.b = FdSketch::from_parts(Variant::Fd, 3 * k, d, h.n_seen, 0.0, sigma, v_rows, vec![0.0; d])?;
        s.c = c;
        s.total_weight = total_weight;
        s.slots = slots;
        s.rng.set_word_pos(word_pos);
        Ok(s)
    }
}

impl Sketcher for TwoLevelSketch {
    fn tag(&self) -> SolverTag {
        SolverTag::TwoLevel
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn n_seen(&self) -> u64 {
        self.b.n_seen() + (self.pending.len() / self.d) as u64
    }

    fn push(&mut self, row: &[f64], label: f64) -> Result<()> {
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
        if self.pending.len() == self.b.ell() * self.d {
            self.reduce_pending()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if !self.pending.is_empty() {
            self.reduce_pending()?;
        }
        Ok(())
    }

    /// `([B; Q]^T [B; Q] + gamma I)^{-1} c` via a thin SVD of the stacked
    /// rows and the FD solve formula.
    fn solve(&self, gamma: f64) -> Result<RidgeSolution> {
        if !self.is_flushed() {
            return Err(FdError::State("flush the sketch before solving".into()));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(FdError::arg(format!("sketch solvers need gamma > 0, got {gamma}")));
        }
        let svd = linalg::thin_svd_right(&self.combined_rows()?)?;
        let x = solve_spectral(&svd.singular_values, &svd.right_vectors, &self.c, gamma)?;
        Ok(RidgeSolution {
            x: DenseVector::new(x)?,
            gamma_effective: gamma,
            solver: SolverTag::TwoLevel,
        })
    }

    fn gram_estimate(&self) -> Result<DenseMatrix> {
        self.b.covariance()?.add(&self.q_rows().gram())
    }

    fn write_state(&self, w: &mut dyn Write) -> Result<()> {
        if !self.is_flushed() {
            return Err(FdError::State("flush the sketch before serializing it".into()));
        }
        codec::write_header(
            w,
            &Header {
                kind: SketchKind::TwoLevel,
                ell: self.ell as u64,
                d: self.d as u64,
                n_seen: self.b.n_seen(),
                alpha: 0.0,
            },
        )?;
        codec::put_u64(w, self.k as u64)?;
        codec::put_f64s(w, self.b.sigma())?;
        codec::put_f64s(w, self.b.v_rows().as_slice())?;
        codec::put_f64s(w, &self.c)?;
        codec::put_f64(w, self.total_weight)?;
        codec::put_f64s(w, self.slots.as_slice())?;
        codec::put_u64(w, self.seed)?;
        codec::put_u128(w, self.rng.get_word_pos())?;
        w.flush()?;
        Ok(())
    }
}
