//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad sizes, non-positive powers, ...).
    #[error("config: {0}")]
    Config(String),

    /// Input shorter than an operation requires.
    #[error("length: need at least {required} samples, got {actual}")]
    Length { required: usize, actual: usize },

    /// Tensor shape disagreement, naming the layer where it happened.
    #[error("shape at layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },

    /// Malformed or truncated file content.
    #[error("format: {0}")]
    Format(String),

    /// Operation applied in the wrong state (e.g. double log transform).
    #[error("state: {0}")]
    State(String),

    /// Invalid argument to an otherwise well-configured operation.
    #[error("argument: {0}")]
    Argument(String),

    /// Training diverged or was fed unusable data.
    #[error("training at epoch {epoch}: {msg}")]
    Train { epoch: usize, msg: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(layer: usize, msg: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            msg: msg.into(),
        }
    }
}
