use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid action {action} for a network with {num_queues} queues")]
    InvalidAction { action: usize, num_queues: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("encoding `{0}` is not compatible with this environment")]
    IncompatibleEncoding(String),

    #[error("unknown encoding scheme `{0}`")]
    UnknownEncoding(String),

    #[error("backward called before a recorded forward pass")]
    BackwardBeforeForward,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("environment sampling gave up after {rejections} consecutive rejections")]
    SamplingExhausted { rejections: usize },

    #[error("policy evaluation system is singular at pivot {pivot}")]
    SingularSystem { pivot: usize },

    /// States `(q1, q2, y1, y2)` on which the last two solutions disagreed.
    #[error("approximate MDP sequence did not converge; {} states still differ", disagreements.len())]
    NoConvergence { disagreements: Vec<[u64; 4]> },
}
