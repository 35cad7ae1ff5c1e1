use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not describe {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: {detail}")]
    Contract { op: &'static str, detail: String },
    #[error("softmax slice {slice} has no unmasked entries")]
    DegenerateMask { slice: usize },
    #[error("tape has already been consumed by a backward pass")]
    TapeConsumed,
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("parameter `{name}` has no gradient")]
    MissingGradient { name: String },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
