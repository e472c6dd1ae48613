use swipt_core::Error as CoreError;

/// Failure classes, each with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("gradient check failed: max relative error {0:e}")]
    GradCheck(f64),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GradCheck(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Format(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_) => CliError::Config(e.to_string()),
            CoreError::Io(_) => CliError::Io(e.to_string()),
            CoreError::Format(_) | CoreError::Dimension(_) => CliError::Format(e.to_string()),
            CoreError::Diverged { .. }
            | CoreError::AllRunsFailed(_)
            | CoreError::Degenerate
            | CoreError::NonFinite(_)
            | CoreError::Empty(_)
            | CoreError::MessageOutOfRange { .. } => CliError::Training(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
