use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    /// Input that violates a documented precondition or schema.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    /// Columns of the observed design that are linear combinations of earlier ones.
    #[error("rank-deficient design; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("non-finite log-likelihood at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image {path}: {msg}")]
    Image { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCovariance(_)
                | Error::RankDeficient { .. }
                | Error::SingularCovariance(_)
                | Error::NonFinite { .. }
                | Error::Numerical(_)
        )
    }
}
