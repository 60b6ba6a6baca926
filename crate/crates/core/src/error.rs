use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the singularity-detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,
    #[error("points not rescaled: row {row} has norm {norm}")]
    NotRescaled { row: usize, norm: f64 },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate neighborhood")]
    DegenerateNeighborhood,
    #[error("degenerate values")]
    DegenerateValues,
    #[error("null degenerate: every tail exceedance is zero (d = {d})")]
    NullDegenerate { d: usize },
    #[error("AUC undefined: only one class present")]
    AucUndefined,
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("all configurations failed: {0}")]
    AllConfigurationsFailed(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True when the failure stems from user-supplied data or parameters
    /// rather than from a broken internal invariant.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_) | Error::NullDegenerate { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
