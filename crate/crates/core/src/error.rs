use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    Rank(Vec<usize>),

    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("label {label} at line {line} is outside [0, {classes})")]
    LabelRange {
        line: usize,
        label: i64,
        classes: usize,
    },

    #[error("dataset has no samples")]
    EmptyDataset,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("runs cannot be compared: {0}")]
    IncompatibleRuns(String),

    #[error("{path}: {source}")]
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

    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
