use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoStream(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("missing required column `{0}` in header")]
    MissingColumn(String),

    #[error("conflicting coordinates for stop `{stop_id}`: line {first_line} {first:?} vs line {second_line} {second:?}")]
    StopConflict {
        stop_id: String,
        first_line: u64,
        first: (f64, f64),
        second_line: u64,
        second: (f64, f64),
    },

    #[error("malformed {what} at line {line}: {detail}")]
    Malformed {
        what: &'static str,
        line: u64,
        detail: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite coordinate")]
    NonFinite,

    #[error("unknown stop_id `{0}`")]
    UnknownStop(String),

    #[error("route `{0}` is not in the feature vocabulary")]
    UnknownRoute(String),

    #[error("no weather observation within {max_gap_s} s of {at}")]
    NoWeather {
        at: chrono::NaiveDateTime,
        max_gap_s: i64,
    },

    #[error("MAPE undefined: every target is zero")]
    AllTargetsZero,

    #[error("unsupported model artifact version `{0}`")]
    ArtifactVersion(String),

    #[error("model artifact truncated: {0}")]
    ArtifactTruncated(String),

    #[error("model artifact shape error: {0}")]
    ArtifactShape(String),

    #[error("schema version mismatch: model has `{model}`, input has `{input}`")]
    SchemaMismatch { model: String, input: String },

    #[error("misaligned segment identity: {0}")]
    Misaligned(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the caller's inputs or configuration rather
    /// than by the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::MissingColumn(_)
                | Error::StopConflict { .. }
                | Error::Malformed { .. }
                | Error::Empty(_)
                | Error::InvalidConfig(_)
                | Error::ArtifactVersion(_)
                | Error::ArtifactTruncated(_)
                | Error::ArtifactShape(_)
                | Error::SchemaMismatch { .. }
        )
    }
}
