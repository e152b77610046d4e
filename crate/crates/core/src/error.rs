use thiserror::Error;

use crate::optimizer::OptimizationTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("topology of clip '{clip}' does not match the target topology")]
    TopologyMismatch { clip: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite Sinkhorn kernel ({0}); increase lambda2 or enable log-domain mode")]
    NumericOverflow(String),

    #[error("pose optimization diverged at step {step}: energy is not finite")]
    Divergence {
        step: usize,
        trace: Box<OptimizationTrace>,
    },

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported feature at joint '{joint}': {feature}")]
    UnsupportedFeature { joint: String, feature: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
