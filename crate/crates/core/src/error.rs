use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic bytes, not a model file")]
    BadMagic,

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("covariance of component {component} is not positive definite")]
    NotPositiveDefinite { component: usize },

    #[error("zero diagonal entry in triangular factor of block {block}")]
    SingularFactor { block: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("pose graph is disconnected: node {node} is unreachable from the fixed node")]
    Disconnected { node: usize },

    #[error("ray origin ({:.3}, {:.3}, {:.3}) lies outside the grid", .0[0], .0[1], .0[2])]
    OriginOutsideGrid([f64; 3]),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

/// Coarse failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Usage,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_)
            | Error::BadMagic
            | Error::Truncated { .. }
            | Error::Format(_)
            | Error::Json(_)
            | Error::Image(_) => ErrorKind::Io,
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::OriginOutsideGrid(_) => {
                ErrorKind::Usage
            }
            Error::NotPositiveDefinite { .. }
            | Error::SingularFactor { .. }
            | Error::EmptyCloud
            | Error::Numerical(_)
            | Error::Disconnected { .. } => ErrorKind::Numerical,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
