use std::path::PathBuf;

use thiserror::Error;

use crate::kg::NodeType;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty value for a {0} node")]
    EmptyValue(NodeType),

    #[error("malformed registry id {0:?}: expected `NCT` followed by 8 digits")]
    MalformedRegistryId(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown node type tag {0:?}")]
    UnknownNodeType(String),

    #[error("unknown relation tag {0:?}")]
    UnknownRelation(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("missing or invalid field `{field}`: {message}")]
    Field { field: &'static str, message: String },

    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },

    #[error("record {0} is not an interventional drug trial")]
    RejectedRecord(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("query text is empty")]
    EmptyQuery,

    #[error("text {0:?} has no usable tokens or subwords")]
    Untokenizable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Errors caused by the caller's arguments rather than by input data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::EmptyValue(_)
                | Error::UnknownNodeType(_)
                | Error::EmptyQuery
                | Error::Untokenizable(_)
        )
    }

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
