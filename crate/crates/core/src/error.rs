use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("acceleration decreases with command at speed index {speed_index} (command index {cmd_index})")]
    MonotonicityViolation { speed_index: usize, cmd_index: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mean filter window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("sample rate {0} Hz is too low for the low-pass cutoff")]
    InvalidRate(f64),

    #[error("no sensor frame at t = {t:.3} s (beyond end of log)")]
    NoMatch { t: f64 },

    #[error("command history does not cover [{from:.3}, {to:.3}] s")]
    InsufficientHistory { from: f64, to: f64 },

    #[error("design matrix is rank deficient")]
    Singular,

    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("speed error exceeded {limit} m/s for {window} s (t = {t:.2} s)")]
    Diverged { t: f64, limit: f64, window: f64 },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invalid drive log: {0}")]
    InvalidLog(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
