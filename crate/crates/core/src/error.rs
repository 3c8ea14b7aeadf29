use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("split infeasible: {0}")]
    SplitInfeasible(String),
    #[error("negative sampling exhausted: requested {requested}, found {found} after {attempts} attempts")]
    SamplingExhausted {
        requested: usize,
        found: usize,
        attempts: usize,
    },
    #[error("invalid pair ({0}, {1}): endpoints must differ")]
    InvalidPair(usize, usize),
    #[error("node id {id} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric overflow: non-finite values in {0}")]
    NonFinite(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("gradient check failed: max relative error {max_rel_err:.3e}; worst coordinates: {worst}")]
    GradientCheck { max_rel_err: f64, worst: String },
    #[error("data integrity: {0}")]
    Integrity(String),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 usage/config, 3 data integrity, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::InvalidPair(..) | Error::Io { .. } => 2,
            Error::NonFinite(_) | Error::GradientCheck { .. } => 4,
            Error::MalformedInput(_)
            | Error::DimensionMismatch(_)
            | Error::Integrity(_)
            | Error::NodeOutOfRange { .. }
            | Error::Serde(_) => 3,
            Error::SplitInfeasible(_)
            | Error::SamplingExhausted { .. }
            | Error::Contract(_)
            | Error::UndefinedMetric(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
