//! Randomized projection sketches: `C = S A` and `c = S b` accumulated over
//! `ell`-row batches, each batch with a fresh `S`.
//!
//! Dense projections use i.i.d. entries `+-1/sqrt(ell)`, so `E[S^T S] = I`.
//! CountSketch sends each input row to one uniformly chosen sketch row with
//! a random sign, so it is applied row by row without buffering.

use std::io::{Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sketcher;
use crate::error::{FdError, Result};
use crate::linalg::{self, DenseMatrix};
use crate::ridge::{solve_gram, RidgeSolution, SolverTag};
use crate::sketch::codec::{self, Header, SketchKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionKind {
    Dense,
    CountSketch,
}

/// Streaming state of RP and CS ridge regression.
///
/// `FDSK` body: `C` (ell*d f64), `c_proj` (ell f64), `u64 seed`,
/// `u128 word_pos` of the ChaCha8 stream.
#[derive(Clone, Debug)]
pub struct Projection {
    kind: ProjectionKind,
    ell: usize,
    d: usize,
    c_mat: DenseMatrix,
    c_proj: Vec<f64>,
    pending: Vec<f64>,
    pending_labels: Vec<f64>,
    n_seen: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

/// One dense `ell x ell` projection with entries `+-1/sqrt(ell)`.
pub fn draw_rp_matrix<R: RngCore>(rng: &mut R, ell: usize) -> DenseMatrix {
    let scale = 1.0 / (ell as f64).sqrt();
    let mut data = Vec::with_capacity(ell * ell);
    while data.len() < ell * ell {
        let mut bits = rng.next_u64();
        for _ in 0..64.min(ell * ell - data.len()) {
            data.push(if bits & 1 == 1 { scale } else { -scale });
            bits >>= 1;
        }
    }
    DenseMatrix::from_row_major(ell, ell, data).expect("square by construction")
}

/// Target row and sign for one CountSketch column.
fn draw_cs_column<R: RngCore>(rng: &mut R, ell: usize) -> (usize, f64) {
    let row = rng.random_range(0..ell);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    (row, sign)
}

/// One `ell x cols` CountSketch matrix, drawn column by column exactly as
/// the streaming sketch consumes its randomness.
pub fn draw_cs_matrix<R: RngCore>(rng: &mut R, ell: usize, cols: usize) -> DenseMatrix {
    let mut s = DenseMatrix::zeros(ell, cols);
    for j in 0..cols {
        let (row, sign) = draw_cs_column(rng, ell);
        s.set(row, j, sign);
    }
    s
}

impl Projection {
    pub fn new(kind: ProjectionKind, ell: usize, d: usize, seed: u64) -> Result<Self> {
        if ell < 1 {
            return Err(FdError::arg("projection size ell must be >= 1"));
        }
        if d < 1 {
            return Err(FdError::arg("feature dimension d must be >= 1"));
        }
        Ok(Self {
            kind,
            ell,
            d,
            c_mat: DenseMatrix::zeros(ell, d),
            c_proj: vec![0.0; ell],
            pending: Vec::new(),
            pending_labels: Vec::new(),
            n_seen: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// The projected data `C`.
    pub fn projected(&self) -> &DenseMatrix {
        &self.c_mat
    }

    pub fn projected_labels(&self) -> &[f64] {
        &self.c_proj
    }

    pub fn is_flushed(&self) -> bool {
        self.pending.is_empty()
    }

    /// Applies one explicit batch: `C += S batch`, `c_proj += S labels`.
    /// Dense projections need exactly `ell` rows (zero-pad a short final
    /// batch); CountSketch accepts any number.
    pub fn reduce(&mut self, batch: &DenseMatrix, labels: &[f64]) -> Result<()> {
        if batch.cols() != self.d || batch.rows() != labels.len() {
            return Err(FdError::arg("batch, labels and sketch disagree in shape"));
        }
        match self.kind {
            ProjectionKind::Dense => {
                if batch.rows() != self.ell {
                    return Err(FdError::arg(format!(
                        "dense projection batches have {} rows, got {}",
                        self.ell,
                        batch.rows()
                    )));
                }
                let s = draw_rp_matrix(&mut self.rng, self.ell);
                self.c_mat.add_product(&s, batch)?;
                let projected = s.matvec(labels)?;
                linalg::axpy(1.0, &projected, &mut self.c_proj);
            }
            ProjectionKind::CountSketch => {
                for (row, &label) in batch.row_iter().zip(labels) {
                    self.hash_row(row, label);
                }
            }
        }
        Ok(())
    }

    fn hash_row(&mut self, row: &[f64], label: f64) {
        let (target, sign) = draw_cs_column(&mut self.rng, self.ell);
        linalg::axpy(sign, row, self.c_mat.row_mut(target));
        self.c_proj[target] += sign * label;
    }

    fn reduce_pending(&mut self) -> Result<()> {
        let mut data = std::mem::take(&mut self.pending);
        let mut labels = std::mem::take(&mut self.pending_labels);
        data.resize(self.ell * self.d, 0.0);
        labels.resize(self.ell, 0.0);
        let batch = DenseMatrix::from_row_major(self.ell, self.d, data)?;
        let result = self.reduce(&batch, &labels);
        let mut buf = batch.into_vec();
        buf.clear();
        labels.clear();
        self.pending = buf;
        self.pending_labels = labels;
        result
    }

    pub(crate) fn read_body<R: Read>(r: &mut R, h: &Header) -> Result<Self> {
        let kind = match h.kind {
            SketchKind::RandomProjection => ProjectionKind::Dense,
            SketchKind::CountSketch => ProjectionKind::CountSketch,
            other => return Err(codec::bad(format!("{other:?} is not a projection sketch"))),
        };
        let (ell, d) = (h.ell as usize, h.d as usize);
        let c_mat = codec::get_matrix(r, ell, d)?;
        let c_proj = codec::get_f64s(r, ell)?;
        let seed = codec::get_u64(r)?;
        let word_pos = codec::get_u128(r)?;
        let mut p = Self::new(kind, ell, d, seed)?;
        if c_proj.iter().any(|v| !v.is_finite()) {
            return Err(codec::bad("non-finite projected labels"));
        }
        p.c_mat = c_mat;
        p.c_proj = c_proj;
        p.n_seen = h.n_seen;
        p.rng.set_word_pos(word_pos);
        Ok(p)
    }
}

impl Sketcher for Projection {
    fn tag(&self) -> SolverTag {
        match self.kind {
            ProjectionKind::Dense => SolverTag::Rp,
            ProjectionKind::CountSketch => SolverTag::Cs,
        }
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn n_seen(&self) -> u64 {
        self.n_seen
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
        self.n_seen += 1;
        match self.kind {
            ProjectionKind::CountSketch => self.hash_row(row, label),
            ProjectionKind::Dense => {
                self.pending.extend_from_slice(row);
                self.pending_labels.push(label);
                if self.pending_labels.len() == self.ell {
                    self.reduce_pending()?;
                }
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if !self.pending_labels.is_empty() {
            self.reduce_pending()?;
        }
        Ok(())
    }

    /// `(C^T C + gamma I)^{-1} C^T c_proj`.
    fn solve(&self, gamma: f64) -> Result<RidgeSolution> {
        if !self.is_flushed() {
            return Err(FdError::State("flush the sketch before solving".into()));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(FdError::arg(format!("sketch solvers need gamma > 0, got {gamma}")));
        }
        let rhs = self.c_mat.t_matvec(&self.c_proj)?;
        let x = solve_gram(&self.c_mat.gram(), &rhs, gamma)?;
        Ok(RidgeSolution {
            x: crate::linalg::DenseVector::new(x)?,
            gamma_effective: gamma,
            solver: self.tag(),
        })
    }

    fn gram_estimate(&self) -> Result<DenseMatrix> {
        Ok(self.c_mat.gram())
    }

    fn write_state(&self, w: &mut dyn Write) -> Result<()> {
        if !self.is_flushed() {
            return Err(FdError::State("flush the sketch before serializing it".into()));
        }
        let kind = match self.kind {
            ProjectionKind::Dense => SketchKind::RandomProjection,
            ProjectionKind::CountSketch => SketchKind::CountSketch,
        };
        codec::write_header(
            w,
            &Header {
                kind,
                ell: self.ell as u64,
                d: self.d as u64,
                n_seen: self.n_seen,
                alpha: 0.0,
            },
        )?;
        codec::put_f64s(w, self.c_mat.as_slice())?;
        codec::put_f64s(w, &self.c_proj)?;
        codec::put_u64(w, self.seed)?;
        codec::put_u128(w, self.rng.get_word_pos())?;
        w.flush()?;
        Ok(())
    }
}
