//! Error type shared across the crate.

use std::path::PathBuf;

use crate::dataset::ValidationIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("requested {k} neighbours but only {n} samples are available")]
    TooManyNeighbors { k: usize, n: usize },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("gallery is empty after protocol filtering")]
    EmptyGallery,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset failed validation with {} issue(s): {}", .0.len(), summarize(.0))]
    Validation(Vec<ValidationIssue>),

    #[error("bad magic bytes in embedding file")]
    BadMagic,

    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("{actual} trailing bytes after payload")]
    TrailingBytes { actual: usize },

    #[error("metadata/embedding count mismatch: {metas} metadata rows, {embeddings} embeddings")]
    CountMismatch { metas: usize, embeddings: usize },

    #[error("line {line}: unknown viewpoint {value:?}")]
    UnknownViewpoint { line: usize, value: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. }
            | Error::Shape(_)
            | Error::TooManyNeighbors { .. }
            | Error::ClassOutOfRange { .. }
            | Error::EmptyGallery => "input",
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::CountMismatch { .. }
            | Error::UnknownViewpoint { .. }
            | Error::Parse { .. }
            | Error::Json(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn summarize(issues: &[ValidationIssue]) -> String {
    let mut parts: Vec<String> = issues.iter().take(3).map(ToString::to_string).collect();
    if issues.len() > 3 {
        parts.push("...".to_owned());
    }
    parts.join("; ")
}
