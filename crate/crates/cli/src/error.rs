use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of a harness command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {detail}")]
    Config { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] noisytwins::error::Error),
    #[error("{failed} of {total} sweep runs failed")]
    PartialSweep { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_divergence() => EXIT_DIVERGED,
            CliError::PartialSweep { .. } => EXIT_PARTIAL,
            _ => EXIT_USAGE,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn config(path: &Path, detail: impl ToString) -> Self {
        CliError::Config { path: path.to_path_buf(), detail: detail.to_string() }
    }
}
