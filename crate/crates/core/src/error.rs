use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky pivot at `index` was not strictly positive.
    #[error("matrix is not positive definite (pivot {index} = {pivot:e}); is the covariance regularized?")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("eigenvalue iteration did not converge within {iterations} sweeps")]
    NoConvergence { iterations: usize },

    #[error("action contains a non-finite entry at index {index}")]
    NonFiniteAction { index: usize },

    #[error("non-finite loss in minibatch {minibatch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("actuator group {index} is empty")]
    EmptyGroup { index: usize },

    #[error("actuator groups do not partition 0..{n_actions}: {reason}")]
    InvalidPartition { n_actions: usize, reason: String },

    #[error("environment does not support state injection")]
    StateSyncUnsupported,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("checkpoint is corrupt: {0}")]
    CheckpointCorrupt(String),

    #[error("unknown analysis kind `{0}` (expected dual-sim, covariance, pca, allocation or energy)")]
    UnknownAnalysisKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by user input rather than by a failing computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::ConfigParse { .. } | Error::UnknownAnalysisKind(_)
        )
    }

    pub(crate) fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
