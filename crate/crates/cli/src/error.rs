use dropin_core::ErrorCategory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dropin_core::Error),
    /// Unreadable or malformed config file, or an invalid flag combination.
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Config(_) => ErrorCategory::Config,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numerical => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
