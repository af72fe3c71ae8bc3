use std::path::PathBuf;

use kanscale::KanError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Help or version text requested; not a failure.
    #[error("{0}")]
    Help(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("key `{key}`: expected {expected}, got `{value}`")]
    TypeMismatch { key: String, expected: String, value: String },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] KanError),
}

impl CliError {
    /// Process exit status: 2 for configuration errors, 3 for numeric
    /// divergence, 4 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Help(_) => 0,
            Self::UnknownKey(_) | Self::TypeMismatch { .. } | Self::MissingKey(_) | Self::Usage(_) => 2,
            Self::Io { .. } => 4,
            Self::Core(e) => match e {
                KanError::Diverged { .. } | KanError::DivergedForward { .. } => 3,
                KanError::Io(_) => 4,
                _ => 2,
            },
        }
    }
}
