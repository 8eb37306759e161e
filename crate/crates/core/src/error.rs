use thiserror::Error;

/// Errors raised anywhere in the recovery toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("soft-threshold level must be non-negative, got {0}")]
    InvalidThreshold(f64),

    #[error("singular Sylvester system: eigenvalue pair sum {0:e} below 1e-12")]
    SingularSylvester(f64),

    #[error("solver initialisation failed: {0}")]
    InitFailure(String),

    #[error("line search exhausted {0} halvings without an acceptable step")]
    LineSearchFailure(usize),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("penalty collapsed to {0:e}")]
    DegeneratePenalty(f64),

    #[error("non-finite gradient encountered")]
    GradientOverflow,

    #[error("training diverged after {0} consecutive learning-rate halvings")]
    TrainingDiverged(usize),

    #[error("grid generator needs a perfect-square dimension >= 4, got {0}")]
    InvalidGridSize(usize),

    #[error("empirical covariance needs at least one sample")]
    EmptySample,

    #[error("NMSE undefined: all ground-truth matrices are zero")]
    UndefinedNormalization,

    #[error("AUC undefined: ground truth has {edges} edges out of {pairs} pairs")]
    UndefinedAuc { edges: usize, pairs: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
