use std::process::ExitCode;

use thiserror::Error;

/// Failures surfaced to the user, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad configuration values or inconsistent requests.
    #[error("{0}")]
    Usage(String),

    /// A prerequisite artifact from an earlier step does not exist.
    #[error("{what} not found at {path}; run `rawnp {step}` first")]
    MissingArtifact {
        what: &'static str,
        path: String,
        step: &'static str,
    },

    /// Refusing to overwrite an existing artifact.
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(String),

    #[error(transparent)]
    Core(#[from] rawnp::Error),

    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 success, 1 usage error, 2 data error, 3 numeric fault.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) | CliError::Exists(_) => 1,
            CliError::Core(e) if e.is_numeric_fault() => 3,
            CliError::Core(rawnp::Error::Invalid(_)) => 1,
            CliError::Autodiff(autodiff::AutodiffError::NumericFault { .. }) => 3,
            _ => 2,
        })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
