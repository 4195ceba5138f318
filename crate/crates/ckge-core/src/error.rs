//! Crate-wide error type.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input line; carries file and 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A structural invariant of a snapshot sequence does not hold.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    /// A generation scenario cannot be satisfied by the given base graph.
    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    /// Rejection sampling exhausted its retry budget.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// Non-finite loss or gradient.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// Formula precondition not met (e.g. too few snapshots).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
