use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("insufficient sample: need more than {need} usable rows, have {have}")]
    InsufficientSample { need: usize, have: usize },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("particle degeneracy at period {period}: all weights are zero")]
    Degenerate { period: usize },
    #[error("explosive path at period {period}")]
    Explosive { period: usize },
    #[error("unstable dynamics above the bound (spectral radius {0:.4})")]
    Unstable(f64),
    #[error("optimization failed: {0}")]
    Convergence(String),
    #[error("not nested: {0}")]
    NotNested(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
