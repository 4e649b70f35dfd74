use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field contains non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("parameter `{name}` = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: String,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("{method} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the command-line front end:
    /// 1 validation, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::OutOfRange { .. }
            | Error::GridMismatch(_)
            | Error::Precondition(_)
            | Error::Config { .. } => 1,
            Error::NonFinite { .. } | Error::NonConvergence { .. } | Error::Numerical(_) => 2,
            Error::Checkpoint(_) | Error::Io(_) | Error::Csv(_) => 3,
        }
    }
}

pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: format!("[{lo}, {hi}]"),
        })
    }
}
