use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read input {path}: {source}")]
    UnreadableInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },

    #[error("seed term list is empty")]
    EmptySeedList,

    #[error("sentence store is empty")]
    EmptyStore,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training split has a single label ({0}); both classes are required")]
    DegenerateDataset(String),

    #[error("span [{start}, {end}) out of range for sentence of {len} words")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("sequence of {len} tokens exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("word {0:?} does not occur in the sentence")]
    WordNotInSentence(String),

    #[error("sentence rejected by the corpus filter")]
    SentenceRejectedByFilter,

    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Malformed {
            what: what.into(),
            detail: detail.to_string(),
        }
    }
}
