use thiserror::Error;

/// Crate-wide error type. Variants map onto CLI exit codes: configuration,
/// validation and parse failures exit 1, everything else exits 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("training diverged at epoch {epoch}: loss is non-finite")]
    Divergence { epoch: usize },

    #[error("no qualifying target nodes (min_degree {min_degree})")]
    EmptyTargets { min_degree: usize },

    #[error("no candidate flips for target node {target}")]
    NoCandidates { target: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code this error maps to when surfaced by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Config(_) => 1,
            _ => 2,
        }
    }
}
