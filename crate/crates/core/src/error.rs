use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("matrix is singular (effective eigenvalue {0:e})")]
    SingularMatrix(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("accumulator holds no samples")]
    EmptyAccumulator,
    #[error("dimension {0} too small for a reduced problem")]
    DimTooSmall(usize),
    #[error("coordinate descent did not converge after {iterations} sweeps")]
    NotConverged { iterations: usize },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("target {target} has vanishing second moment ({cov_ii:e})")]
    DegenerateTarget { target: usize, cov_ii: f64 },
    #[error("labels are required")]
    MissingLabels,
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("gradient descent diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Format(#[from] crate::format::FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
