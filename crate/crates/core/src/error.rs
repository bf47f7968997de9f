use thiserror::Error;

/// Errors produced by the detection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value in layer {layer}: {what}")]
    NonFinite { layer: usize, what: String },

    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted { iteration: usize, reason: String },

    #[error("detector `{detector}` failed on sample {sample} at {snr_db} dB: {source}")]
    Detector {
        detector: String,
        sample: u64,
        snr_db: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
