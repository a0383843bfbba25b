use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size for {what}: got {got}, need at least {min}")]
    InvalidSize {
        what: &'static str,
        got: usize,
        min: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid activation model: {0}")]
    InvalidModel(String),
    #[error("gossip step size b = {b} outside (0, {max}]")]
    InvalidB { b: f64, max: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("trace has no non-empty round")]
    EmptyTrace,
    #[error("no spectral gap: rho = {0} must lie in [0, 1)")]
    SpectralGap(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
