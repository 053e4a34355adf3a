//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by tensor kernels, the autoencoder, clustering and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch {
        context: &'static str,
        detail: String,
    },

    #[error("{context}: spatial extents must be even for 2x2 pooling, got {height}x{width}")]
    OddExtent {
        context: &'static str,
        height: usize,
        width: usize,
    },

    #[error("recorded unpooling requires pool indices")]
    MissingIndices,

    #[error("window [{start_ms}, {end_ms}] ms falls outside the trace extent of {trace_ms} ms")]
    WindowOutOfRange {
        start_ms: f64,
        end_ms: f64,
        trace_ms: f64,
    },

    #[error("window of {window_ms} ms is not an integral number of samples at dt {dt_ms} ms")]
    NonIntegralSamples { window_ms: f64, dt_ms: f64 },

    #[error("window of {samples} samples is odd; pooling needs even extents (adjust window_ms or dt_ms)")]
    OddSampleCount { samples: usize },

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("training diverged: non-finite loss at layer {layer}, epoch {epoch}")]
    NonFiniteLoss { layer: usize, epoch: usize },

    #[error("clustering needs at least as many points as clusters ({points} points, {clusters} clusters)")]
    TooFewPoints { points: usize, clusters: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("degenerate input for {context}: {detail}")]
    DegenerateInput {
        context: &'static str,
        detail: String,
    },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid survey layout: {0}")]
    InvalidLayout(String),

    #[error("label {label} exceeds the {palette}-color palette")]
    LabelOutOfRange { label: usize, palette: usize },

    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),

    #[error("invalid value `{value}` for config key `{key}`: {reason}")]
    InvalidConfigValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("malformed {what}: {reason}")]
    BadFormat { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
