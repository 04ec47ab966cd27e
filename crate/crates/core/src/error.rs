use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("insufficient length in {op}: length {len} shorter than required {required}")]
    InsufficientLength {
        op: &'static str,
        len: usize,
        required: usize,
    },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("graph construction failed: {0}")]
    Construction(String),

    #[error("node id mismatch: {0}")]
    IdMismatch(String),

    #[error("non-uniform timestamps at row {row}: expected step {expected}s, found {found}s")]
    NonUniformTimestamps { row: usize, expected: i64, found: i64 },

    #[error("series too short: {len} steps, need at least {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("malformed data in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// True for errors caused by bad numerics rather than bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteGradient { .. }
                | Error::Divergence { .. }
                | Error::UndefinedMetric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
