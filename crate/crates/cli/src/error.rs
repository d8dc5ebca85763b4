use latinv_core::Error as CoreError;

/// Command failure, carrying the process exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("oracle unreachable: {0}")]
    OracleUnreachable(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Config(_) => 2,
            CliError::OracleUnreachable(_) => 3,
            CliError::DimensionMismatch(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let text = e.to_string();
        match e {
            CoreError::DimensionMismatch { .. } => CliError::DimensionMismatch(text),
            CoreError::OracleUnavailable { .. } | CoreError::Protocol { .. } | CoreError::OracleRemote { .. } => {
                CliError::OracleUnreachable(text)
            }
            CoreError::InvalidInput(_) | CoreError::Json(_) => CliError::Config(text),
            CoreError::NonFinite(_) | CoreError::Io(_) => CliError::Internal(text),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
