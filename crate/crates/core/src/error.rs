use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its invariants.
    #[error("configuration error: {quantity}: {reason}")]
    Config { quantity: &'static str, reason: String },

    /// Bad caller-supplied data (sample buffers, series, files with wrong content).
    #[error("input error: {0}")]
    Input(String),

    #[error("band '{name}' [{f_low} Hz, {f_high} Hz] contains no grid bins")]
    BandOutOfRange { name: String, f_low: f64, f_high: f64 },

    /// Objects resolved against different grids were combined.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("insufficient data: need at least {needed} bins, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("no altitude bin holds at least {min_count} samples")]
    EmptySeries { min_count: usize },

    #[error("objective is not finite at the starting point")]
    NonFiniteStart,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn config(quantity: &'static str, reason: impl Into<String>) -> Self {
        Error::Config { quantity, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// True when the failure is caused by user input rather than a bug or
    /// an environment problem. The CLI maps these to exit status 2.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Io { source, .. } => matches!(
                source.kind(),
                std::io::ErrorKind::NotFound
                    | std::io::ErrorKind::InvalidData
                    | std::io::ErrorKind::UnexpectedEof
            ),
            Error::NonFiniteStart => false,
            _ => true,
        }
    }
}
