use std::fmt;

use open_intake_core::store::StoreError;
use open_intake_core::Error;

use crate::config::ConfigError;

/// Reader of our output went away; not worth reporting.
pub const BROKEN_PIPE: &str = "broken_pipe";

/// A failed command: printed as `error[code]: message`, exit status 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        CliError { code: code.into(), message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = match &e {
            Error::ValidationFailed(report) => {
                let fields: Vec<String> = report.errors.iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
                format!("payload failed validation: {}", fields.join("; "))
            }
            other => other.to_string(),
        };
        CliError::new(e.code(), message)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Error::Store(e).into()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new("config", e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::new(BROKEN_PIPE, "standard output closed");
        }
        CliError::new("io_error", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("invalid_json", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
