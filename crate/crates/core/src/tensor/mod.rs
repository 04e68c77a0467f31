//! Minimal dense/sparse linear algebra with a reverse-mode tape and Adam.
//!
//! Everything the models need and nothing more: dense row-major matrices,
//! one sparse-times-dense kernel (plus its edge-weighted variant), and the
//! handful of segment ops that graph attention requires.

mod adam;
mod dense;
mod gradcheck;
mod sparse;
mod tape;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use dense::Tensor;
pub use gradcheck::finite_diff_check;
pub use sparse::Csr;
pub use tape::{Gradients, Tape, Var};

pub(crate) use dense::{matmul_nt_into, matmul_tn_into};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("buffer holds {actual} values, shape needs {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, lhs: [usize; 2], rhs: [usize; 2]) -> Self {
        Self::Shape { op, lhs, rhs }
    }
}
