//! Dense f64 tensors, a reverse-mode operation tape, trainable parameters and
//! the finite-difference oracle used to verify every gradient.

mod gradcheck;
mod io;
mod optim;
mod store;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, ParameterCheck};
pub use io::{load_checkpoint, load_embeddings, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use optim::{sgd_step, Adam, AdamConfig};
pub use store::{Parameter, ParameterStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{
    concat, dot, leaky_relu, leaky_relu_scalar, linear, log_sum_exp, softmax, softmax_nll, weighted_sum, Tensor,
    DEFAULT_LEAKY_SLOPE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite loss value {value}")]
    NonFiniteLoss { value: f64 },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("embedding file line {line}: {detail}")]
    EmbeddingParse { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NumericError {
    NumericError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
