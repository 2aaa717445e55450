use thiserror::Error;

/// Errors shared across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A moment matrix is rank-deficient relative to the eigenvalue
    /// tolerance, usually due to too few or collinear samples.
    #[error("singular moment matrix: {0}")]
    SingularMoment(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Scalar weight denominator is numerically zero; both estimators are
    /// exact with identical bias and no weighting is meaningful.
    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// More than the tolerated fraction of Monte Carlo trials failed.
    #[error("excessive trial failures: {failed} of {total}")]
    ExcessiveFailures { failed: usize, total: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),
}

pub type Result<T> = std::result::Result<T, Error>;
