use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ringclock::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use ringclock::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidConfig(_) | E::InvalidArgument(_) | E::InvalidModel(_)) => 2,
            CliError::Core(E::Numerical(_) | E::Internal(_)) => 3,
            CliError::Io { .. } | CliError::Internal(_) => 1,
        }
    }
}
