use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library or CLI can report. Exit codes: usage errors map
/// to 1, data errors to 2, I/O errors to 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid UTF-8 at byte offset {byte_offset}")]
    InvalidUtf8 { byte_offset: usize },

    #[error("vocabulary is empty")]
    EmptyVocabulary,

    #[error("rho must be in [0, 1], got {0}")]
    InvalidRho(f64),

    #[error("perturbation kind {kind} requires rho")]
    MissingRho { kind: String },

    #[error("perturbation kind {kind} does not take rho")]
    UnexpectedRho { kind: String },

    #[error("record counts differ: {left} != {right}")]
    RecordCountMismatch { left: usize, right: usize },

    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("{skipped} of {total} records malformed (more than 10%)")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("scores row {row}: duplicate key ({key})")]
    DuplicateScoreKey { row: usize, key: String },

    #[error("scores row {row}: {reason}")]
    BadScoreRow { row: usize, reason: String },

    #[error("scores reference unknown setting_id {0:?}")]
    UnknownSettingId(String),

    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),

    #[error("unknown sweep {0:?}")]
    UnknownSweep(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wrap an I/O error with the path it came from.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } => 3,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 3,
            _ => 2,
        }
    }
}
