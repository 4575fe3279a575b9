use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid shape {rows}x{cols} with {len} entries")]
    InvalidShape { rows: usize, cols: usize, len: usize },

    #[error("non-finite entry {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("singular value decomposition did not converge for a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error("iteration produced non-finite values at step {step}")]
    Diverged { step: usize },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid coefficient schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical kernels themselves, as opposed to
    /// bad inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SvdNonConvergence { .. } | Error::NonFinite { .. } | Error::Diverged { .. })
    }
}
