//! Small feedforward networks with hand-written backpropagation, Adam and
//! target-network soft updates.

mod format;
mod mlp;
mod optim;

use thiserror::Error;

pub use format::{Reader, FORMAT_VERSION};
pub use mlp::{soft_update, ForwardCache, Gradients, Layer, Mlp, OutputActivation};
pub use optim::{apply_update, OptimizerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("format version {found} not supported (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("truncated parameter data")]
    Truncated,
    #[error("malformed parameter data: {0}")]
    Format(String),
}
