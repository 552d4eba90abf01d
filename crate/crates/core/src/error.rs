use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("activation cache does not match the network it is used with")]
    StaleCache,

    #[error("diverged at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("action {action} is not available in state {state}")]
    InvalidAction { state: String, action: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (reader supports {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("degenerate reference pair: parameter gradient has zero norm")]
    DegenerateReference,

    #[error("zero Q-normalizer")]
    ZeroNormalizer,

    #[error("unknown environment id {0:?}")]
    UnknownEnv(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing checkpoints: need at least {needed}, have {have}")]
    MissingCheckpoints { needed: usize, have: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
