use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),

    #[error("invalid converter spec: {0}")]
    InvalidConverter(String),

    #[error("voltage {voltage} V outside the safe read range of +/-{limit} V")]
    VoltageOutOfRange { voltage: f64, limit: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("weight level {level} outside [-{max_level}, {max_level}]")]
    LevelOutOfRange { level: i32, max_level: i32 },

    #[error("correction factor calibration failed: {0}")]
    Calibration(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged (seed {seed}): {reason}")]
    Divergence { seed: u64, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint decode error: {0}")]
    Checkpoint(String),

    #[error("report parse error: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
