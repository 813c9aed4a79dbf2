use alloc::string::String;

/// Contract violations and degenerate inputs raised by the core primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding vector has zero norm")]
    ZeroNorm,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("labels contain a single class; AUC is undefined")]
    SingleClass,
    #[error("missing template field `{0}`")]
    MissingField(String),
}

pub type Result<T> = core::result::Result<T, Error>;
