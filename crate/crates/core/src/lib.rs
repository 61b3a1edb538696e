//! Streaming ridge regression on top of Frequent Directions sketches.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod parallel;
pub mod ridge;
pub mod risk;
pub mod sketch;
pub mod verify;

pub use error::{FdError, Result};
pub use linalg::{DenseMatrix, DenseVector};
