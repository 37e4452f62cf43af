//! Experiment harness: JSON configs in; metrics CSV, summary JSON and SVG out.
//!
//! Exit codes: 0 success, 1 verification failure, 2 config error,
//! 3 numerical or I/O failure.

pub mod config;
pub mod experiment;
pub mod report;
pub mod verify;

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
    /// Names of the failed checks.
    Verify(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    /// Adds run context to numerical failures.
    pub fn context(self, ctx: &str) -> CliError {
        match self {
            CliError::Numerical(m) => CliError::Numerical(format!("{ctx}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Verify(failed) => write!(f, "verification failed: {}", failed.join(", ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dngd::Error> for CliError {
    fn from(e: dngd::Error) -> Self {
        if e.is_usage_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
