//! Dense tensors and a reverse-mode differentiation tape.

pub mod gradcheck;
mod rng;
mod tape;
mod tensor;


pub use rng::{derive_rng, seeded_rng, SeededRng};
pub use tape::{sigmoid, softmax_values, Tape, Var, LAYER_NORM_EPS};
pub use tensor::{argmax, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("softmax over a fully masked vector")]
    AllMasked,
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite value in {what} at flat index {index}")]
    NonFinite { what: String, index: usize },
    #[error("{0}")]
    InvalidArgument(String),
}
