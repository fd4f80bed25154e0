use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DoaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DoaError {
    #[error("angle {0}° is outside [-90, 90]")]
    AngleDomain(f64),

    #[error("invalid array configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("N - M0 = {numerator} is not divisible by M - M0 = {denominator}")]
    NonIntegerPartition { numerator: usize, denominator: usize },

    #[error("subarray index {index} out of range (K = {count})")]
    SubarrayIndex { index: usize, count: usize },

    #[error("ill-conditioned manifold: reciprocal condition {rcond:.3e} below {threshold:.0e}")]
    Conditioning { rcond: f64, threshold: f64 },

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("root {index}: arg(z)/(2πd) = {value:.6} lies outside [-1, 1]")]
    ArcsinDomain { index: usize, value: f64 },

    #[error("only {found} admissible roots, {needed} required")]
    DegenerateRoots { found: usize, needed: usize },

    #[error("search space of {0:.3e} candidates exceeds the guard")]
    SearchTooLarge(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("every subarray estimate failed")]
    AllSubarraysFailed,

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("prediction file for subarray k = {k} not found at {path}")]
    MissingPrediction { k: usize, path: PathBuf },

    #[error("predictions: {0}")]
    Predictions(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DoaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DoaError::Io {
            path: path.into(),
            source,
        }
    }
}
