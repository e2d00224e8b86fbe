use std::path::PathBuf;

/// Errors produced anywhere in the receiver toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid QPSK symbol index {0} (expected 1..=4)")]
    InvalidKey(u8),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probability {value} for `{name}` is outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    LayerShape {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("stale activations: {0}")]
    StaleActivations(String),

    #[error("dataset mismatch: {0}")]
    Dataset(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("invalid experiment config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
