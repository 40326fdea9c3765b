use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient data: {rows} rows cannot seed {m} components (need at least {})", .m + 1)]
    InsufficientData { rows: usize, m: usize },

    #[error("root finder did not converge in {iterations} iterations (last bracket [{lo:e}, {hi:e}])")]
    Convergence { lo: f64, hi: f64, iterations: usize },

    #[error("secular equation has no root in ({lo:e}, {hi:e})")]
    NoRoot { lo: f64, hi: f64 },

    #[error("mu = {mu:e} coincides with retained eigenvalue {lambda:e}; perturb mu")]
    MuAtPole { mu: f64, lambda: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", .path.display())]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// I/O failure with the offending path in the message.
    pub(crate) fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }
}
