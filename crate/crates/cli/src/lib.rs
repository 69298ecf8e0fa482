//! Command implementations behind the `jumpctl` binary: configuration
//! loading, synthesis, analysis, simulation and the inverted-pendulum demo.

pub mod commands;
pub mod config;
pub mod pendulum;
pub mod report;
pub mod traces;

use std::fmt;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input files or configuration. Exit code 2.
    Validation(Vec<String>),
    /// A solver or certificate failed. Exit code 3.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(vec![msg.into()])
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msgs) => write!(f, "invalid input: {}", msgs.join("; ")),
            CliError::Solver(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<jumpctl::Error> for CliError {
    fn from(e: jumpctl::Error) -> Self {
        use jumpctl::Error as E;
        match e {
            E::DimensionMismatch(_)
            | E::IndexOutOfRange { .. }
            | E::NotErgodic(_)
            | E::InvalidInitialMode { .. }
            | E::InvalidChannel(_)
            | E::InvalidModel(_) => CliError::Validation(vec![e.to_string()]),
            other => CliError::Solver(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
