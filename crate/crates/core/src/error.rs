use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("value {value} outside [0, 1]")]
    Range { value: f64 },

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },

    #[error("unsupported annotation arity {0} (expected 2 or 4)")]
    Arity(usize),

    #[error("coordinate {value} out of bounds after normalization")]
    OutOfBounds { value: f64 },

    #[error("degenerate annotation: ground-truth box has zero area")]
    Degenerate,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("group size {0} is below 2")]
    GroupSize(usize),

    #[error("annotation falls entirely off-screen")]
    OffScreen,

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("asset error: {0}")]
    Asset(String),

    #[error("predictions reference unknown ids: {0:?}")]
    UnknownIds(Vec<String>),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("stage `{stage}` requires {artifact}, produced by {producer}")]
    Dependency {
        stage: String,
        artifact: String,
        producer: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 dependency, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Range { .. }
            | Error::Config { .. }
            | Error::Parse { .. }
            | Error::Line { .. }
            | Error::Arity(_)
            | Error::DuplicateId(_)
            | Error::UnknownIds(_) => 2,
            Error::Dependency { .. } => 3,
            _ => 4,
        }
    }
}
