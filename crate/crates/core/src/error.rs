use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A precondition of an operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A required field was missing or malformed while parsing an input file.
    #[error("failed to parse `{field}`: {reason}")]
    Parse { field: String, reason: String },

    /// One or more configuration values are out of range.
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// A camera transform is not a rigid motion.
    #[error("frame {frame} ({path}): {reason}")]
    NonRigidPose {
        frame: usize,
        path: String,
        reason: String,
    },

    /// Training diverged.
    #[error("non-finite loss at step {step} (learning rate {learning_rate:e}, max sigma {max_sigma})")]
    NonFiniteLoss {
        step: usize,
        learning_rate: f64,
        max_sigma: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
