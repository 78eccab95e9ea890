//! Crate-wide error type.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing placeholder value `{0}`")]
    MissingPlaceholder(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unscripted request ({0})")]
    UnscriptedRequest(String),

    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed backend response: {message}; payload: {payload}")]
    MalformedResponse { message: String, payload: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint version mismatch: file has {found}, engine supports {supported}")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("config digest mismatch: checkpoint has {checkpoint}, current run has {current}")]
    DigestMismatch { checkpoint: String, current: String },

    #[error("checkpoint parse error at byte {offset} (line {line}, column {column}): {message}")]
    CheckpointCorrupt {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ensemble empty")]
    EnsembleEmpty,

    #[error("checkpoint directory is locked by another process: {0}")]
    Locked(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
