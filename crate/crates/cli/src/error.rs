use std::process::ExitCode;

use wentzell_core::Error;

/// Command failures, each with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration or input files (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// The energy guard stopped the run (exit 3).
    #[error("run aborted: {0}")]
    GuardAbort(String),
    /// A solver did not converge (exit 4).
    #[error("not converged: {0}")]
    Unconverged(String),
    /// Anything else, including failed invariant checks (exit 1).
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::GuardAbort(_) => 3,
            CliError::Unconverged(_) => 4,
            CliError::Failed(_) => 1,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGrid(_)
            | Error::GridMismatch { .. }
            | Error::InvalidParameter { .. }
            | Error::Potential(_)
            | Error::Parse { .. } => CliError::Config(e.to_string()),
            Error::GuardAbort { .. } => CliError::GuardAbort(e.to_string()),
            Error::NewtonDiverged { .. } | Error::Precondition(_) => {
                CliError::Unconverged(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(format!("i/o error: {e}"))
    }
}
