//! Process-level error classes and their exit codes.
//!
//! Three failure classes leave the process: a usage or configuration
//! problem (exit 2), an I/O problem (exit 3), and a verification or
//! run-time assertion failure (exit 1). Success is exit 0. Argument
//! parsing errors also exit 2, via clap.

use std::fmt;

/// One error, tagged with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// The invocation or the config file asks for something invalid.
    Config(String),
    /// The file system did not cooperate.
    Io(String),
    /// A check failed or a run died after a valid start.
    Failed(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self::Config(message.into())
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::Io(message.into())
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self::Failed(message.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Failed(_) => 1,
            Self::Config(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) | Self::Io(m) | Self::Failed(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

/// Attaches the offending path to a raw I/O error.
pub fn io_at(path: &std::path::Path, err: std::io::Error) -> CliError {
    CliError::io(format!("{}: {err}", path.display()))
}
