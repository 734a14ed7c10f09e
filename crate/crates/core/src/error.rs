use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PtgError>;

#[derive(Debug, Error)]
pub enum PtgError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("columns with missing values: {}", .0.join(", "))]
    MissingValues(Vec<String>),

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("table is already standardized")]
    AlreadyStandardized,

    #[error("unknown element symbol `{0}`")]
    UnknownSymbol(String),

    #[error("invalid formula `{formula}`: {reason}")]
    Formula { formula: String, reason: String },

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length-scales must be strictly positive, got {0}")]
    NonPositiveLengthScale(f64),

    #[error("kernel matrix not factorizable even with jitter {jitter:e}")]
    SingularKernel { jitter: f64 },

    #[error("assignment infeasible: {elements} elements but only {nodes} nodes")]
    Infeasible { elements: usize, nodes: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("chain failed at iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<PtgError>,
    },

    #[error("{stage} failed for seed {seed}: {source}")]
    Stage {
        stage: &'static str,
        seed: u64,
        #[source]
        source: Box<PtgError>,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl PtgError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PtgError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the numerics rather than in the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            PtgError::SingularKernel { .. } | PtgError::NonFinite(_) => true,
            PtgError::Chain { source, .. } | PtgError::Stage { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

impl From<serde_json::Error> for PtgError {
    fn from(e: serde_json::Error) -> Self {
        PtgError::Serde(e.to_string())
    }
}
