//! Dense 64-bit tensors and reverse-mode differentiation over per-sentence
//! computation graphs.
//!
//! Networks are written once against the [`Graph`] trait. Scoring runs them
//! on [`Eager`], training runs them on a [`Tape`] and calls
//! [`Tape::backward_into`]. Both share the same forward kernels, so a value
//! computed during training is bit-identical to the value seen at inference.

mod gradcheck;
mod graph;
mod kernels;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use graph::{Eager, Graph};
pub use params::{Gradients, ParamId, ParameterStore};
pub use tape::{NodeId, Tape};
pub use tensor::{log_softmax, logsumexp, softmax, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("index {index} out of range for {op} over length {len}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("{0} needs at least one input")]
    Empty(&'static str),
    #[error("invalid shape {0:?}")]
    BadShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("expected {expected} parameters, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("loss function is not deterministic ({first} then {again})")]
    NonDeterministic { first: f64, again: f64 },
}
