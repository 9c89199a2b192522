use thiserror::Error;

/// Errors shared by all pipeline stages.
#[derive(Debug, Error)]
pub enum PgmError {
    /// An argument violated an operation's input contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numeric parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two buffers that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A text match file contained a malformed line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A flow file did not start with the expected magic tag.
    #[error("bad flow file magic: expected 202021.25, got {0}")]
    BadMagic(f32),

    /// A flow file ended before its declared payload.
    #[error("truncated flow file: expected {expected} bytes of payload, got {actual}")]
    Truncated { expected: usize, actual: usize },

    /// A flow file header declared implausible dimensions.
    #[error("flow dimensions out of range: {width}x{height}")]
    DimensionOverflow { width: i32, height: i32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, PgmError>;
