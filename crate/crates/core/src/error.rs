use thiserror::Error;

use crate::he::HeError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    He(#[from] HeError),

    #[error("input error: {0}")]
    Input(String),

    #[error("model parse error at node {node:?}: {reason}")]
    Parse { node: Option<usize>, reason: String },

    #[error("result is ambiguous: {candidates} values fall in the label domain")]
    Ambiguous { candidates: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("randomizer session error: {0}")]
    Session(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn parse(node: impl Into<Option<usize>>, reason: impl Into<String>) -> Self {
        Error::Parse {
            node: node.into(),
            reason: reason.into(),
        }
    }
}
