use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on the inputs of an operation does not hold.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot read {path}: {reason} (expected {expected})")]
    Input {
        path: PathBuf,
        reason: String,
        expected: &'static str,
    },

    #[error("backend `{backend}` failed: {reason}")]
    Backend { backend: String, reason: String },

    #[error("rasterizer failed on {primitives} primitives at {width}x{height}: {reason}")]
    Rasterizer {
        primitives: usize,
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("non-finite gradient for primitive {id}")]
    NonFiniteGradient { id: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
