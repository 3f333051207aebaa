//! Minimal neural network stack: tape-based reverse-mode autodiff, the op
//! set needed by the encoders and policy heads, Adam, checkpointing, and a
//! finite-difference gradient checker.

mod adam;
mod checkpoint;
mod models;
mod tensor;

pub mod gradcheck;
pub mod ops;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, write_manifest, CheckpointMeta};
pub use models::{Dense, ImageCnn, Model, TextCnn};
pub use tensor::{detached_copy, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: String,
        expected: String,
        got: String,
    },
    #[error("backward() requires a scalar loss, got shape {shape}")]
    NotScalar { shape: String },
    #[error("backward() on a tensor with no tape")]
    Detached,
    #[error("non-finite value in `{name}`")]
    NonFinite { name: String },
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
