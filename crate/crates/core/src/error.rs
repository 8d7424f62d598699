use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GsneError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GsneError {
    /// Malformed or out-of-range input values.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingestion error in {file} at row {row}: {message}")]
    Ingest {
        file: String,
        row: usize,
        message: String,
    },

    #[error("graph construction error: {0}")]
    Construction(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite loss or gradient during training.
    #[error("training error: {0}")]
    Training(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Corrupt or incompatible checkpoint / graph artifact.
    #[error("load error for {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GsneError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GsneError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn load(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        GsneError::Load {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 for data/validation problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            GsneError::Training(_) | GsneError::Numeric(_) => 3,
            _ => 2,
        }
    }
}
