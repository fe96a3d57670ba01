use std::path::PathBuf;

use chf_core::error::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),

    #[error("parameter '{name}': {problem}")]
    InvalidParam { name: String, problem: String },

    #[error("spec {path}: {problem}")]
    BadSpec { path: PathBuf, problem: String },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
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

impl HarnessError {
    pub fn param(name: impl Into<String>, problem: impl Into<String>) -> Self {
        HarnessError::InvalidParam {
            name: name.into(),
            problem: problem.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type HarnessResult<T> = Result<T, HarnessError>;
