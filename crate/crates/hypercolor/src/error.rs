use thiserror::Error;

/// Errors produced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("weights are not bound to this spec (hash {expected:#x}, got {actual:#x})")]
    SpecBinding { expected: u64, actual: u64 },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point sets must have equal size: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("set size {size} exceeds exact-solver cap {cap}; subsample the clouds first")]
    CapExceeded { size: usize, cap: usize },

    #[error("cloud has no colors but a colored cloud is required")]
    MissingColors,

    #[error("all points are identical; cannot normalize to the unit ball")]
    DegenerateScale,

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("invalid config key `{key}`: {message}")]
    InvalidConfig { key: String, message: String },

    #[error("loss became non-finite at step {step} (object `{object_id}`)")]
    NanLoss { step: usize, object_id: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("missing checkpoint entry `{0}`")]
    MissingCheckpointEntry(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
