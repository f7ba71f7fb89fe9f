use thiserror::Error;

/// Failures that stop a command before its acceptance checks can run.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("solver error: {0}")]
    Solver(#[from] gradvi_core::Error),

    #[error("cannot write {path}: {reason}")]
    Output { path: String, reason: String },
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Output { .. } => 3,
        }
    }

    /// Setup failures reported by the core (bad grid, parameters or data)
    /// are configuration errors.
    pub fn setup(err: gradvi_core::Error) -> Self {
        CliError::Config(err.to_string())
    }
}
