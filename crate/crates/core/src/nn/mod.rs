//! Dense-tensor neural kernels with hand-written gradients.

mod activation;
mod conv;
mod dense;
mod init;
mod loss;
mod lstm;
mod sgd;
mod tensor;

pub use activation::Activation;
pub use conv::{Conv2d, ConvCache, ConvGrads, ConvLayerSpec};
pub use dense::{Dense, DenseCache, DenseGrads};
pub use init::{glorot_uniform, glorot_limit};
pub use loss::{loss_backward, loss_forward, weight, LossBatch, LossKind, CONGESTION_THRESHOLD};
pub use lstm::{LstmCell, LstmCellSpec, LstmGrads, LstmStepCache};
pub use sgd::{sgd_step, Param};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { op: &'static str, expected: Vec<usize>, got: Vec<usize> },
    #[error("loss batch is empty")]
    EmptyBatch,
    #[error("loss batch: {0}")]
    InvalidBatch(String),
    #[error("loss is zero; gradient undefined, skip the update")]
    ZeroLoss,
    #[error("non-finite gradient in `{layer}`")]
    NonFiniteGradient { layer: String },
    #[error("learning rate must be non-negative and finite, got {0}")]
    InvalidLearningRate(f64),
}

pub(crate) fn check_shape(op: &'static str, expected: &[usize], got: &[usize]) -> Result<(), NnError> {
    if expected != got {
        return Err(NnError::ShapeMismatch { op, expected: expected.to_vec(), got: got.to_vec() });
    }
    Ok(())
}
