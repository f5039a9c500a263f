use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mass too small for MC oracle ({accepted} acceptances in {attempts} attempts)")]
    MassTooSmall { accepted: usize, attempts: usize },

    #[error("numerically empty interval [{lower}, {upper}] around mean {mean}")]
    EmptyInterval { mean: f64, lower: f64, upper: f64 },

    #[error("state diverged at step {step}")]
    StateDiverged { step: usize },

    #[error("gramian overflow after {steps} terms")]
    GramianOverflow { steps: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("insufficient pairs: found {found}, need at least {required}")]
    InsufficientPairs { found: usize, required: usize },

    #[error("insufficient warmup excitation (covariate condition number {condition:e})")]
    InsufficientExcitation { condition: f64 },

    #[error("projection bracket failure")]
    ProjectionBracket,

    #[error("projection root function not monotone at lambda = {lambda:e}")]
    ProjectionNotMonotone { lambda: f64 },

    #[error("bound inapplicable: ground truth lies outside the confidence ellipsoid (distance^2 = {distance_sq})")]
    BoundInapplicable { distance_sq: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
