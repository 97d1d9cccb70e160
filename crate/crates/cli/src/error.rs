use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const INGEST: i32 = 3;
    pub const SOLVER: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("ingest: {0}")]
    Ingest(String),

    #[error("ingest: {path}:{line}:{column}: {message}")]
    Cell { path: PathBuf, line: u64, column: String, message: String },

    #[error("estimate: {0}")]
    Estimate(#[from] cqrsub::Error),

    #[error("output: {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Ingest(_) | CliError::Cell { .. } => exit::INGEST,
            CliError::Estimate(_) => exit::SOLVER,
            CliError::Output { .. } => exit::OTHER,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
