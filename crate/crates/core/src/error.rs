use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hierarchy spec: {0}")]
    InvalidSpec(String),

    #[error("node `{0}` is not a leaf")]
    NotALeaf(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("level {level} out of range 1..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("invalid quality {value} at position {index}: must lie in [0, 1]")]
    InvalidQuality { index: usize, value: f64 },

    #[error("invalid substrate config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("exact Shapley limited to {limit} components, got {n}; use the permutation estimator")]
    ExactLimit { n: usize, limit: usize },

    #[error("incomplete coalition lattice: {} subset(s) missing (masks {missing:?})", missing.len())]
    IncompleteLattice { missing: Vec<u32> },

    #[error("online win-rate requires a non-empty trace")]
    EmptyTrace,

    #[error("removal order is not a permutation of the components: {0}")]
    NotAPermutation(String),

    #[error("numerical guard: {0}")]
    NumericalGuard(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{path}: unsupported format `{found}` (expected {expected})")]
    UnsupportedFormat {
        path: String,
        expected: String,
        found: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid scenario: {0}")]
    Scenario(String),
}

impl Error {
    pub(crate) fn parse(path: &str, line: u64, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            column,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed or inconsistent input data, as
    /// opposed to configuration or numerical problems.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::UnsupportedFormat { .. }
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::UnknownLabel(_)
                | Error::DuplicateLabel(_)
                | Error::ShapeMismatch(_)
                | Error::IncompleteLattice { .. }
                | Error::InvalidQuality { .. }
                | Error::EmptyTrace
        )
    }
}
