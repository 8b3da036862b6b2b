use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AlimeError>;

#[derive(Debug, Error)]
pub enum AlimeError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed input at line {line}: {message}")]
    MalformedInput { line: usize, message: String },

    #[error("column `{0}` has no present values")]
    DegenerateColumn(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("non-finite value encountered in {0}")]
    NumericOverflow(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("singular system in surrogate fit")]
    SingularFit,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl AlimeError {
    pub fn config(msg: impl Into<String>) -> Self {
        AlimeError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AlimeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage and configuration problems, as opposed to failures while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            AlimeError::Config(_)
                | AlimeError::Shape { .. }
                | AlimeError::MalformedInput { .. }
                | AlimeError::Io { .. }
        )
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(AlimeError::Shape { expected, actual });
    }
    Ok(())
}
