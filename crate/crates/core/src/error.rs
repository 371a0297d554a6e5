use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: unreadable file: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{context}: dimension mismatch: {reason}")]
    DimensionMismatch { context: String, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("points are collinear")]
    Collinear,

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("plane fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("no plane with support >= 3 after {iterations} iterations")]
    NoPlaneFound { iterations: usize },

    #[error("reference DBSCAN limited to {limit} points, got {actual}")]
    OracleTooLarge { limit: usize, actual: usize },

    #[error("render failed: {0}")]
    Render(String),

    #[error("object placement failed after {attempts} attempts")]
    Placement { attempts: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("insufficient frames: need {needed} measured frames, have {available}")]
    InsufficientFrames { needed: usize, available: usize },

    #[error("{path}: invalid json: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn header(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedHeader {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
