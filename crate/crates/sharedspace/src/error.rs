use std::path::PathBuf;

use sharedspace_core::Error as CoreError;

pub type Result<T, E = IoError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] CoreError),
}

impl IoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        IoError::Parse { path: path.into(), message: message.to_string() }
    }

    pub fn row(path: impl Into<PathBuf>, line: u64, message: impl ToString) -> Self {
        IoError::Row { path: path.into(), line, message: message.to_string() }
    }
}
