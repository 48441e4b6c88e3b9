use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("ordering error at line {line}: timestamp {t_us} us regresses more than {tolerance_us} us behind {max_seen_us} us")]
    Ordering {
        line: usize,
        t_us: u64,
        max_seen_us: u64,
        tolerance_us: u64,
    },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Training { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status for this error: 2 for usage/validation problems,
    /// 3 for runtime or data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Param(_) | Error::Contract(_) | Error::OutOfRange(_) => 2,
            Error::File { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::Parse { .. }
            | Error::Ordering { .. }
            | Error::Training { .. }
            | Error::File { .. }
            | Error::Io(_)
            | Error::Json(_) => 3,
        }
    }

    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.display().to_string(),
            source,
        }
    }
}
