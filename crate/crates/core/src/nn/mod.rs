//! Feed-forward networks, the Gaussian policy, Adam and checkpoints. All
//! arithmetic is 64-bit.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod policy;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use mlp::{orthogonal_matrix, Mlp, Tape};
pub use policy::{diag_gaussian_log_prob, GaussianPolicy, PolicySample, ValueNet, HIDDEN};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward called without a recorded forward pass")]
    NoForwardPass,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
