use thiserror::Error;

pub type Result<T, E = BcgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BcgError {
    #[error("invalid band {low_hz}-{high_hz} Hz for fs = {fs} Hz: {reason}")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        fs: f64,
        reason: &'static str,
    },

    #[error("{what}: need at least {needed} samples, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(&'static str),

    #[error("invalid fiducial at sample {index}: {reason}")]
    InvalidFiducial { index: usize, reason: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no R-peaks found in ECG trace")]
    EmptyTruth,

    #[error("invalid synth spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("{path}: non-finite value in column `{column}` at row {row}")]
    NonFinite {
        path: String,
        row: usize,
        column: String,
    },

    #[error("{path}: sampling rate missing (use --fs or a `# fs=<Hz>` header line)")]
    MissingFs { path: String },

    #[error("config: {0}")]
    Config(String),

    #[error("report schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
