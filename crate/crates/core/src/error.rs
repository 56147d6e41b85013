use std::path::PathBuf;

/// Errors produced by the tracking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("rays are parallel, cannot triangulate")]
    ParallelRays,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("nothing visible: the model does not project into the image")]
    EmptyProjection,
    #[error("resolution mismatch: expected {expected:?}, got {got:?}")]
    ResolutionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("object anchors are collinear")]
    CollinearAnchors,
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
