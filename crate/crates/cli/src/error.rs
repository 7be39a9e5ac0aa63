use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config files or paths.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: micclust_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } if source.is_data_error() => 3,
            CliError::Core { .. } | CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

/// Attaches a short description of the failing step to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for micclust_core::Result<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Core { context: what.into(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use micclust_core::Error;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let data: micclust_core::Result<()> = Err(Error::Validation("bad".into()));
        assert_eq!(data.context("load").unwrap_err().exit_code(), 3);
        let run: micclust_core::Result<()> = Err(Error::Convergence("slow".into()));
        let err = run.context("fit").unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert_eq!(err.to_string(), "fit: fit did not converge: slow");
    }
}
