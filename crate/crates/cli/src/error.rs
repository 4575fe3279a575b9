use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] muonlab::Error),
    #[error("did not converge: {0}")]
    NotConverged(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 usage or config, 3 numerical failure, 4 non-convergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use muonlab::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged(_) => 4,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(
                E::InvalidConfig(_)
                | E::Domain(_)
                | E::InvalidSchedule(_)
                | E::Json(_)
                | E::Io(_)
                | E::InvalidShape { .. }
                | E::ShapeMismatch { .. },
            ) => 2,
            CliError::Core(_) | CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
