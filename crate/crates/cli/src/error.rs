use bohm_lab::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    /// Bad inputs are config errors; everything the numerics ran into is not.
    fn from(e: Error) -> Self {
        match e {
            Error::CutoffExceeded { .. }
            | Error::NotNormalized { .. }
            | Error::InvalidState(_)
            | Error::InvalidParameter(_)
            | Error::EmptyTopShell
            | Error::ImpossibleCategory { .. }
            | Error::StateFile(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}
