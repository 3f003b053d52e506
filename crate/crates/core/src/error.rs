use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("field does not belong to this grid")]
    GridMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("conjugate gradient breakdown: {0}")]
    CgBreakdown(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("degenerate state: component {0} has vanishing norm")]
    DegenerateComponent(usize),

    #[error("Nehari projection failed: {reason}")]
    ProjectionFailure {
        reason: String,
        /// Newton trajectory of scaling vectors, for post-mortem inspection.
        trajectory: Vec<Vec<f64>>,
    },

    #[error("state is not on the discrete Nehari set (max relative residual {0:.3e})")]
    OffManifold(f64),

    #[error("rank-deficient constraint gradients (Gram matrix not invertible)")]
    RankDeficient,

    #[error("non-symmetric matrix input")]
    NotSymmetric,

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
