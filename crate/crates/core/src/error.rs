use std::path::PathBuf;

use crate::network::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed record `{record}`: {message}")]
    MalformedRecord { record: String, message: String },

    #[error("no indicator value for leaf {node:?} ({leaf})")]
    IncompleteEvidence { node: NodeId, leaf: String },

    #[error("sum node {0:?} has no positive outgoing weight")]
    DegenerateNode(NodeId),

    #[error("network is not evaluable: {0}")]
    InvalidNetwork(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("non-finite value at node {node:?}: {message}")]
    NonFinite { node: NodeId, message: String },

    #[error("invalid synthetic spec field `{field}`: {message}")]
    Spec { field: String, message: String },

    #[error("pruning refused: {0}")]
    Prune(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
