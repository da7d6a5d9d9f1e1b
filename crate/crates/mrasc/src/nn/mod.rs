//! Minimal differentiable layer engine: conv2d, max-pool, dense, ReLU,
//! dropout, softmax cross-entropy and the Nadam optimizer, verified by
//! central finite differences.

pub mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod nadam;
mod tensor;

pub use gradcheck::{grad_check, Differentiable, GradCheckReport};
pub use layers::{
    he_uniform, relu_backward, relu_forward, Conv2d, ConvCache, Dense, DenseCache, Dropout,
    DropoutCache, MaxPool2d, Mode, PoolCache,
};
pub use loss::{softmax, softmax_xent};
pub use nadam::{nadam_step, NadamHyper, BETA1, BETA2, EPS};
pub use tensor::{Param, Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("class index {index} out of range for {classes} classes")]
    BadTarget { index: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
