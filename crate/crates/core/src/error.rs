use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum KanError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported dimension {0}: supported range is 1..=8")]
    UnsupportedDimension(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("layer index {index} out of range for a network with {layers} layers")]
    IndexOutOfRange { index: usize, layers: usize },

    #[error("non-finite value in the forward pass at layer {layer}")]
    DivergedForward { layer: usize },

    /// Training produced a non-finite loss. `last_finite_epoch` is the last
    /// 1-based epoch whose loss was finite (`None` if the first one was not).
    #[error("training diverged (last finite epoch: {last_finite_epoch:?})")]
    Diverged { last_finite_epoch: Option<usize> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KanError>;
