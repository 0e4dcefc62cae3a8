use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid rle: {0}")]
    InvalidRle(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid quantizer config: {0}")]
    InvalidQuantConfig(String),

    #[error("empty codebook")]
    EmptyCodebook,

    #[error("vector of dimension {got} does not match codebook dimension {expected}")]
    VectorDim { expected: usize, got: usize },

    #[error("code {index} at level {level} is out of range for codebook size {size}")]
    CodeOutOfRange {
        level: usize,
        index: usize,
        size: usize,
    },

    #[error("expected {expected} codes, got {got}")]
    CodeCount { expected: usize, got: usize },

    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("corpus error in sample {sample}: {message}")]
    Corpus { sample: String, message: String },

    #[error("tokenizer failed on mask {mask}: {source}")]
    Tokenizer {
        mask: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(left: (usize, usize), right: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            left_w: left.0,
            left_h: left.1,
            right_w: right.0,
            right_h: right.1,
        }
    }
}
