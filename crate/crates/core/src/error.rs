use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("index {index} out of range for extent {extent}")]
    Index { index: usize, extent: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, msg: String },

    #[error("sample {index} too long: image+prompt need {needed} tokens, cap is {cap}")]
    SampleTooLong {
        index: usize,
        needed: usize,
        cap: usize,
    },

    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("transfer error on tensor `{name}`: {msg}")]
    Transfer { name: String, msg: String },

    #[error("batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            msg: msg.into(),
        }
    }

    pub fn at_line(line: usize, msg: impl Into<String>) -> Self {
        Error::Validation {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configs, data files), as
    /// opposed to failures while running.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::Validation { .. } | Error::SampleTooLong { .. } => true,
            Error::Batch { source, .. } => source.is_user_error(),
            _ => false,
        }
    }
}
