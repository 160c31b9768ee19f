use std::fmt;

use shgt_core::ShgtError;

/// Failure of a command, classified by the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or values (exit 2).
    Usage(String),
    /// Unreadable or invalid input data and artifacts (exit 3).
    Data(String),
    /// Divergence, non-finite values or a failed gradient check (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(context: impl fmt::Display, err: std::io::Error) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical fault: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ShgtError> for CliError {
    fn from(err: ShgtError) -> Self {
        let msg = err.to_string();
        if err.is_numerical() {
            CliError::Numerical(msg)
        } else if matches!(err, ShgtError::Config(_)) {
            CliError::Usage(msg)
        } else {
            CliError::Data(msg)
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
