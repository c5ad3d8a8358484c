use thiserror::Error;

/// Errors raised by the model, planning and learning layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("invalid reward at state {state}, action {action}: {value}")]
    Reward { state: usize, action: usize, value: f64 },

    #[error("candidate set for layer {layer} is empty")]
    EmptyCandidateSet { layer: usize },

    #[error("prototype {index} does not exist in layer {layer} (family has {len})")]
    UnknownPrototype { layer: usize, index: usize, len: usize },

    #[error("instance too large for exhaustive search: {size} > {limit}")]
    InstanceTooLarge { size: f64, limit: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("malformed instance description at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
