use std::path::{Path, PathBuf};

/// Failure while reading or writing dataset files.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}:{line}: duplicate instance id `{id}`", path.display())]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("{}:{line}: unknown split `{split}`", path.display())]
    UnknownSplit { path: PathBuf, line: usize, split: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Invalid { path: PathBuf, source: annobias_core::Error },
}

impl IngestError {
    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IngestError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }

    pub fn invalid(path: &Path, source: annobias_core::Error) -> Self {
        IngestError::Invalid { path: path.to_path_buf(), source }
    }
}

pub type IngestResult<T> = Result<T, IngestError>;
