use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("score for sample {index} is not finite ({value}) at action {action:?}")]
    NonFiniteScore {
        index: usize,
        value: f64,
        action: Vec<f64>,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
