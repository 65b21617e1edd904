use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed image file: {0}")]
    MalformedFile(String),

    #[error("image too small: {0}")]
    DimensionTooSmall(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("missing weight entry `{0}`")]
    MissingWeight(String),

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("layer {index} ({kind}) is not supported by the trainer")]
    UnsupportedLayerForTraining { index: usize, kind: &'static str },

    #[error("weight file does not start with the LFWT magic")]
    BadMagic,

    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),

    #[error("weight file disagrees with network spec: {0}")]
    ShapeMismatchWithSpec(String),

    #[error("weight file truncated")]
    Truncated,

    #[error("no images found under {0}")]
    EmptyDataset(PathBuf),

    #[error("cannot read dataset entry {path}: {reason}")]
    UnreadableEntry { path: PathBuf, reason: String },

    #[error("label {label} outside [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("confusion matrix has no samples")]
    EmptyMatrix,

    #[error("class {0} has no positive or no negative samples")]
    DegenerateClass(usize),

    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
