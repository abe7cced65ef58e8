use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scene")]
    EmptyScene,
    #[error("invalid object: {0}")]
    InvalidObject(String),
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite loss at {context}: {value}")]
    NonFiniteLoss { context: String, value: f64 },
    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("mismatched object sets: {0}")]
    MismatchedObjects(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("sequence too long: {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("class `{0}` is not in the catalog")]
    MissingClass(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("incompatible input: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
