use thiserror::Error;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<depthmend_core::Error> for CliError {
    fn from(e: depthmend_core::Error) -> Self {
        use depthmend_core::Error as E;
        match e {
            E::InvalidParameter(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<depthmend_nn::Error> for CliError {
    fn from(e: depthmend_nn::Error) -> Self {
        use depthmend_nn::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::Config(_) => CliError::Config(e.to_string()),
            E::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach a path to an I/O failure.
pub fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
