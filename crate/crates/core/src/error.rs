use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("edge references unknown node `{0}`")]
    UnknownNode(String),
    #[error("empty graph")]
    EmptyGraph,
    #[error("no connected pairs")]
    NoConnectedPairs,
    #[error("graph has no edges: {0}")]
    Edgeless(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("format error: expected magic {expected:#010x}, found {actual:#010x}")]
    Magic { expected: u32, actual: u32 },
    #[error("length error: {0}")]
    Length(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: u64, loss: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Whether the error comes from a numerical abort rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
