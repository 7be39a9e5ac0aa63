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

    /// A malformed record in an input file. `line` is 1-based.
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },

    /// Inputs that parse but violate a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Arguments outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("fit did not converge: {0}")]
    Convergence(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(file: impl AsRef<std::path::Path>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse { file: file.as_ref().display().to_string(), line, message: message.into() }
    }

    /// True for errors caused by the content of the inputs rather than the run.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Validation(_) | Error::Domain(_) | Error::Csv(_))
    }
}
