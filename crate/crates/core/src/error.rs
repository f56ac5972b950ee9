use std::path::PathBuf;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("projection singularity in camera {camera} at vertex {vertex} (depth {depth:e})")]
    ProjectionSingularity {
        camera: usize,
        vertex: usize,
        depth: f64,
    },

    #[error("non-finite value in {stage}")]
    NonFinite { stage: &'static str },

    #[error("optimisation diverged: {0}")]
    Diverged(String),

    #[error("coincident vertices {0} and {1}")]
    CoincidentVertices(usize, usize),

    #[error("temporal snapshot does not match current parameters: {0}")]
    SnapshotMismatch(String),

    #[error("missing image for frame {frame}, camera {camera}: {path}")]
    MissingImage {
        frame: usize,
        camera: usize,
        path: PathBuf,
    },

    #[error("image {path} is {width}x{height}, smaller than the working size {w}")]
    ImageTooSmall {
        path: PathBuf,
        width: u32,
        height: u32,
        w: usize,
    },

    #[error("no 3D point projects inside all three views")]
    RigMisconfigured,

    #[error("{0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
