use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] specfield::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// Process exit code: 2 for usage and input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use specfield::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io(_) | CliError::Json(_) => 2,
            CliError::Core(e) => match e {
                E::NotConverged { .. } | E::NotPositive(_) | E::NonFinite(_) | E::NonHermitian { .. } => 3,
                _ => 2,
            },
        }
    }
}
