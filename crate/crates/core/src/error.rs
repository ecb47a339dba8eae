use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense materialization refused: {columns} columns exceeds the limit of {limit}")]
    SizeGuard { columns: usize, limit: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("step size estimation failed: {0}")]
    StepEstimate(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("zero input: {0}")]
    ZeroInput(&'static str),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
