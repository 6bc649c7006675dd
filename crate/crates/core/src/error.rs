use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("density {rho} outside [0, {rho_m}] for segment {segment}")]
    DensityOutOfRange { rho: f64, rho_m: f64, segment: usize },

    #[error("position {x} m outside corridor [0, {length}] m")]
    OutsideCorridor { x: f64, length: f64 },

    #[error("demand {q} veh/s exceeds capacity {capacity} veh/s of segment {segment}")]
    InfeasibleDemand { q: f64, capacity: f64, segment: usize },

    #[error("invalid corridor: {0}")]
    InvalidCorridor(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("requested {requested} samples but only {available} are available")]
    NotEnoughPoints { requested: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("segment {segment} classified as class {class_id}, which has no ensemble")]
    MissingEnsemble { segment: usize, class_id: usize },

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
