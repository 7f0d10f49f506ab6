use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive-definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not orthogonal (residual {0:e})")]
    NotOrthogonal(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("factorization is poorly conditioned (orthogonality residual {residual:e})")]
    Conditioning { residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: String },

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("cannot parse body at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("polyhedron is unbounded")]
    Unbounded,

    #[error("infeasible starting point: {0}")]
    InfeasibleStart(String),

    #[error("no convergence: {message} (last residual {residual:e})")]
    NonConvergence { message: String, residual: f64 },

    #[error("no contact pairs found")]
    NoContactPairs,

    #[error("identity decomposition residual {0:e} exceeds tolerance")]
    DecompositionResidual(f64),

    #[error("recentering failed: {0}")]
    Recentering(String),

    #[error("ill-conditioned map (condition number {0:e})")]
    IllConditioned(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
