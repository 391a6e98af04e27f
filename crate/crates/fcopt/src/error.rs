use std::path::PathBuf;

use fcopt_core::FcError;

pub type Result<T, E = RunError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("unknown {kind} '{name}' (try `fcopt list`)")]
    Unknown { kind: &'static str, name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] FcError),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("cannot encode report: {0}")]
    Encode(String),
}

impl RunError {
    /// Process exit status for this error. Criterion failures exit with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Unknown { .. } | RunError::Config(_) => 2,
            RunError::Core(FcError::Config(_)) => 2,
            _ => 3,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        RunError::Config(msg.into())
    }
}
