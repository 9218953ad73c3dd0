//! Configuration ingestion, experiment orchestration, and bit-stable report
//! emission for the `nhmc` command-line tool.
//!
//! Reports are deterministic: given the same config (and seed), the emitted
//! bytes are identical across runs and across worker-thread counts.

pub mod config;
pub mod report;
pub mod runner;

use thiserror::Error;

/// Tool-level error with a process exit-code class per kind:
/// config errors (2), numeric failures (3), i/o (4). A FAIL verdict exits
/// with 1 and is not an error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Syntax { .. } | CliError::Schema { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn schema(path: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Exit code for a FAIL verdict.
pub const EXIT_VERDICT_FAIL: i32 = 1;
