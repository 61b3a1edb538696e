//! Comparison solvers behind one streaming interface.
//!
//! | tag    | state                                   | solve                         |
//! |--------|-----------------------------------------|-------------------------------|
//! | `rr`   | exact `A^T A`, `A^T b`                  | Cholesky                      |
//! | `fd`   | FD sketch                               | spectral formula, `gamma`     |
//! | `rfd`  | RFD sketch                              | spectral formula, `gamma+alpha` |
//! | `isvd` | FD machinery without shrinkage          | spectral formula              |
//! | `2lfd` | small FD sketch plus sampled residual   | spectral formula              |
//! | `rp`   | dense `+-1/sqrt(ell)` projection        | Cholesky on `C^T C`           |
//! | `cs`   | CountSketch projection                  | Cholesky on `C^T C`           |

mod projection;
mod twolevel;

use std::io::{Read, Write};

pub use projection::{draw_cs_matrix, draw_rp_matrix, Projection, ProjectionKind};
pub use twolevel::TwoLevelSketch;

use crate::error::{FdError, Result};
use crate::linalg::DenseMatrix;
use crate::ridge::{solve_exact, solve_from_sketch, GramAccumulator, RidgeSolution, SolverTag};
use crate::sketch::codec::{self, SketchKind};
use crate::sketch::{FdSketch, Variant};

/// The streaming contract every solver in the experiment harness follows.
pub trait Sketcher: Send {
    fn tag(&self) -> SolverTag;

    fn dim(&self) -> usize;

    fn n_seen(&self) -> u64;

    fn push(&mut self, row: &[f64], label: f64) -> Result<()>;

    /// Folds any buffered rows into the state. Solving and serializing
    /// require a flushed sketcher.
    fn flush(&mut self) -> Result<()>;

    fn solve(&self, gamma: f64) -> Result<RidgeSolution>;

    /// The sketcher's `d x d` approximation of `A^T A`. Diagnostics only.
    fn gram_estimate(&self) -> Result<DenseMatrix>;

    /// Writes the state in the `FDSK` format.
    fn write_state(&self, w: &mut dyn Write) -> Result<()>;
}

impl Sketcher for FdSketch {
    fn tag(&self) -> SolverTag {
        match self.variant() {
            Variant::Fd => SolverTag::Fd,
            Variant::Rfd => SolverTag::Rfd,
            Variant::Isvd => SolverTag::Isvd,
        }
    }

    fn dim(&self) -> usize {
        FdSketch::dim(self)
    }

    fn n_seen(&self) -> u64 {
        FdSketch::n_seen(self)
    }

    fn push(&mut self, row: &[f64], label: f64) -> Result<()> {
        FdSketch::push(self, row, label)
    }

    fn flush(&mut self) -> Result<()> {
        FdSketch::flush(self)
    }

    fn solve(&self, gamma: f64) -> Result<RidgeSolution> {
        solve_from_sketch(self, gamma)
    }

    fn gram_estimate(&self) -> Result<DenseMatrix> {
        FdSketch::gram_estimate(self)
    }

    fn write_state(&self, w: &mut dyn Write) -> Result<()> {
        self.write_to(w)
    }
}

impl Sketcher for GramAccumulator {
    fn tag(&self) -> SolverTag {
        SolverTag::Exact
    }

    fn dim(&self) -> usize {
        GramAccumulator::dim(self)
    }

    fn n_seen(&self) -> u64 {
        GramAccumulator::n_seen(self)
    }

    fn push(&mut self, row: &[f64], label: f64) -> Result<()> {
        GramAccumulator::push(self, row, label)
    }

    fn flush(&mut self) -> Result<()> {
        GramAccumulator::flush(self)
    }

    fn solve(&self, gamma: f64) -> Result<RidgeSolution> {
        solve_exact(self, gamma)
    }

    fn gram_estimate(&self) -> Result<DenseMatrix> {
        Ok(self.gram()?.clone())
    }

    fn write_state(&self, _w: &mut dyn Write) -> Result<()> {
        Err(FdError::Unsupported(
            "the exact accumulator has no sketch serialization".into(),
        ))
    }
}

/// Builds an empty sketcher. `ell` is ignored by `rr`; `seed` only matters
/// for the randomized solvers.
pub fn build_sketcher(tag: SolverTag, ell: usize, d: usize, seed: u64) -> Result<Box<dyn Sketcher>> {
    Ok(match tag {
        SolverTag::Exact => Box::new(GramAccumulator::new(d)?),
        SolverTag::Fd => Box::new(FdSketch::new(ell, d)?),
        SolverTag::Rfd => Box::new(FdSketch::new_robust(ell, d)?),
        SolverTag::Isvd => Box::new(FdSketch::new_isvd(ell, d)?),
        SolverTag::TwoLevel => Box::new(TwoLevelSketch::new(ell, d, None, seed)?),
        SolverTag::Rp => Box::new(Projection::new(ProjectionKind::Dense, ell, d, seed)?),
        SolverTag::Cs => Box::new(Projection::new(ProjectionKind::CountSketch, ell, d, seed)?),
    })
}

/// Reads any `FDSK` sketch back into a sketcher.
pub fn read_sketcher<R: Read>(mut r: R) -> Result<Box<dyn Sketcher>> {
    let header = codec::read_header(&mut r)?;
    let sketcher: Box<dyn Sketcher> = match header.kind {
        SketchKind::Fd | SketchKind::Rfd | SketchKind::Isvd => {
            Box::new(FdSketch::read_body(&mut r, &header)?)
        }
        SketchKind::TwoLevel => Box::new(TwoLevelSketch::read_body(&mut r, &header)?),
        SketchKind::RandomProjection | SketchKind::CountSketch => {
            Box::new(Projection::read_body(&mut r, &header)?)
        }
    };
    codec::expect_end(&mut r)?;
    Ok(sketcher)
}
