//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Everything is double precision and CPU-only; the layer set is exactly
//! what the encoder/decoder networks here need (3x3 convolutions with zero
//! padding, 2x2 max pooling, nearest-neighbor up-convolution, dense
//! layers, relu/sigmoid/channel-softmax, soft-Dice loss) plus Adam.
//! Each operation exposes an explicit forward function and a matching
//! backward function; [`layers::Layer`] wires them into a sequential
//! network with cached activations. Forward passes are bit-deterministic
//! for fixed inputs.

mod adam;
pub mod checkpoint;
mod layers;
pub mod ops;
mod tensor;

pub use adam::AdamState;
pub use layers::{Layer, LayerKind, LayerSpec};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("NaN gradient in parameter tensor {0}")]
    NanGradient(usize),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
