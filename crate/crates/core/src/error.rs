use std::path::PathBuf;

use thiserror::Error;

use crate::pose::LandmarkId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("landmark {0} is absent")]
    AbsentLandmark(LandmarkId),

    #[error("root landmark is absent")]
    AbsentRoot,

    #[error("both hip landmarks are absent, no scale reference")]
    AbsentHip,

    #[error("degenerate torso: root-hip length {0:e} is below the threshold")]
    DegenerateTorso(f64),

    #[error("sequence is empty after missing-data treatment")]
    EmptySequence,

    #[error("malformed detector frame: expected 18 keypoints, found {0}")]
    MalformedFrame(usize),

    #[error("{path}: {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no available landmark in subset {0}")]
    EmptySubset(&'static str),

    #[error("no library for action `{0}`")]
    MissingLibrary(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("training diverged at epoch {0}")]
    Diverged(usize),

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Coarse category used by the command-line front end to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::UnknownLabel { .. } => ErrorCategory::Config,
            Error::NonFiniteLoss | Error::Diverged(_) => ErrorCategory::Numeric,
            Error::Fold { source, .. } => source.category(),
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}
