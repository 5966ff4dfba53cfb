use thiserror::Error;

use crate::sample::Modality;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,

    #[error("SSIM window {window} does not fit a {height}x{width} image")]
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },

    #[error("mask position ({row}, {col}) lies outside a {height}x{width} image")]
    MaskOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("modality mismatch: expected {expected}, got {actual}")]
    ModalityMismatch { expected: Modality, actual: Modality },

    #[error("unsupported modality: {0}")]
    UnsupportedModality(String),

    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("cannot split {positions} positions into {segments} segments")]
    TooManySegments { segments: usize, positions: usize },

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty input")]
    EmptyInput,

    #[error("inconsistent traces: {0}")]
    InconsistentTraces(String),

    #[error("insufficient samples: at least two samples with a non-zero pairwise distance are required")]
    InsufficientSamples,

    #[error("invalid config: {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("missing artifact: {0}")]
    MissingArtifacts(String),

    #[error("bridge call timed out after {0} ms")]
    Timeout(u64),

    #[error("bridge protocol error at line {line}: {message}")]
    BridgeProtocol { line: u64, message: String },

    #[error("bridge endpoint dead: {0}")]
    EndpointDead(String),

    #[error("bridge back-end error: {0}")]
    Bridge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the experiment description rather than by
    /// running it.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::ConfigInvalid { .. } | Error::UnknownMetric(_))
    }
}
