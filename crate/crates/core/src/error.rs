use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("value {value} outside admissible range {range}")]
    OutOfRange { value: f64, range: &'static str },

    #[error("pair dependence nu = {nu:e} is at or below the floor; the pair is completely dependent")]
    DegenerateDependence { nu: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("latent dimension {d} not available for {n} points (need 1 <= d <= n-1)")]
    DimensionError { d: usize, n: usize },

    #[error("zero target dissimilarity between points {i} and {j}")]
    ZeroDissimilarity { i: usize, j: usize },

    #[error("non-finite Sammon gradient")]
    NonFiniteGradient,

    #[error("covariance matrix is singular: {0}")]
    SingularCovariance(String),

    #[error("empty parameter grid: {0}")]
    EmptyGrid(&'static str),

    #[error("no fitted model for latent dimension {0}")]
    MissingDimension(usize),

    #[error("not enough stations: {0}")]
    InsufficientStations(String),

    #[error("unknown station '{0}'")]
    UnknownStation(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("station sets disagree; missing: {missing:?}, extra: {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("missing maximum for station '{station}' in year {year}")]
    MissingData { station: String, year: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_)
                | Error::DegenerateDependence { .. }
                | Error::NonFiniteGradient
                | Error::SingularCovariance(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
