//! CLI error type with the exit-code contract:
//! 2 = parse, 3 = validation, 4 = solver, 5 = invariant failure.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn validation(e: netmfg_core::CoreError) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn solver(e: netmfg_core::CoreError) -> Self {
        CliError::Solver(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Invariant(_) => 5,
            // Treat IO problems as validation-stage failures.
            CliError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Solver(_) => "solver",
            CliError::Invariant(_) => "invariant",
            CliError::Io(_) => "io",
        }
    }
}

/// Machine-readable error record written next to the artifacts (or to
/// stderr when the output directory does not exist yet).
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl ErrorRecord {
    pub fn from_error(e: &CliError) -> Self {
        ErrorRecord {
            kind: e.kind(),
            exit_code: e.exit_code(),
            message: e.to_string(),
        }
    }
}
