//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("predictor does not support {0}")]
    UnsupportedCapability(&'static str),

    #[error("hidden layer index {layer} out of range (model has {hidden_layers} hidden layers)")]
    LayerOutOfRange { layer: usize, hidden_layers: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("perturbation weights are all zero")]
    DegenerateWeights,

    #[error("explanation has no nonzero weights")]
    DegenerateExplanation,

    #[error("explanation set is empty")]
    EmptySet,

    #[error("class {class} has no members")]
    EmptyClass { class: usize },

    #[error("{d} features is too many for exact Shapley enumeration (max {max}); use shapley_sampled")]
    TooManyFeatures { d: usize, max: usize },

    #[error("invalid salience scores: {0}")]
    InvalidSalience(String),

    #[error("unknown method `{0}` (expected one of: normlime, lime, splime_l2, smoothgrad_sq, vargrad, shapley, random)")]
    UnknownMethod(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
