use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corpus {0} contains no tokens; cannot build a vocabulary")]
    EmptyVocab(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("PMI({word}, {seed}) is undefined: zero co-occurrence count and no smoothing")]
    UndefinedPmi { word: String, seed: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at step {step}: {detail}{}", last_good.as_ref().map(|p| format!(" (last good checkpoint: {})", p.display())).unwrap_or_default())]
    Divergence {
        step: u64,
        detail: String,
        last_good: Option<PathBuf>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary size mismatch: checkpoint expects {checkpoint}, vocabulary has {vocab}")]
    VocabMismatch { checkpoint: usize, vocab: usize },

    #[error("missing artifact {path}; run `senti {producer}` first")]
    MissingArtifact { path: PathBuf, producer: &'static str },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage/configuration, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}
