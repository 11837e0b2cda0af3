use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("compartment undershoot in region {region} at t = {t}: {value}")]
    Undershoot { region: usize, t: f64, value: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid initial draw: {0}")]
    InvalidDraw(String),

    #[error("simulation failed (seed {seed}, region {region:?}): {source}")]
    Simulation {
        seed: u64,
        region: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("prediction failed for model {model}: {source}")]
    Prediction {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("wrong model kind: expected {expected}, got {actual}")]
    WrongModelKind { expected: String, actual: String },

    #[error("{path}: line {line}, column {column}: {message}")]
    Schema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
