use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text input (run file, qrels, edge list) did not parse.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reranker failed: {0}")]
    Reranker(String),

    /// A per-query failure inside a stream run.
    #[error("query {qid}: {source}")]
    Query {
        qid: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    GraphFormat(#[from] GraphFormatError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// The innermost error, looking through per-query wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Query { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Failures while decoding a serialized graph file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphFormatError {
    #[error("not a graph file (bad magic)")]
    BadMagic,

    #[error("unsupported graph file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("graph file truncated")]
    Truncated,

    #[error("graph file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("graph file corrupt: {0}")]
    Corrupt(String),
}
