use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("invalid series: {0}")]
    Series(String),

    #[error("degenerate split for motor {motor_id}: {message}")]
    DegenerateSplit { motor_id: String, message: String },

    #[error("non-finite input value {0}")]
    NonFinite(f64),

    #[error("linear fit failed: {0}")]
    Fit(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("fault sampling failed: {0}")]
    Sampling(String),

    #[error("fault rejected: {0}")]
    FaultRejected(String),

    #[error("drift estimation failed: {0}")]
    Estimation(String),

    #[error("overlapping fault windows: {0}")]
    OverlappingFaults(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingArtifact(_) => 1,
            Error::Tuning(_) | Error::Sampling(_) => 3,
            _ => 2,
        }
    }
}
