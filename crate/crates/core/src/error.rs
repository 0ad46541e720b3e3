use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    PixelOutOfBounds {
        u: u32,
        v: u32,
        width: u32,
        height: u32,
    },

    #[error("point cloud is empty: {0}")]
    EmptyCloud(String),

    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fused feature has zero norm")]
    DegenerateFusion,

    #[error("frames per second are undefined for a zero total time")]
    UndefinedFps,

    #[error("embedder: {0}")]
    Embedder(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed {kind} file: {reason}")]
    Format {
        path: PathBuf,
        kind: &'static str,
        reason: String,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("missing upstream artifact {path} (run `{stage}` first)")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("stale artifact {path}: produced with different upstream settings (rerun `{stage}`)")]
    StaleArtifact { path: PathBuf, stage: &'static str },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Config(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            kind,
            reason: reason.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

macro_rules! ensure_arg {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::Error::InvalidArgument(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure_arg;
