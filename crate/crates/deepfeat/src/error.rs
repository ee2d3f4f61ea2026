//! Crate-wide error type and result alias.

use thiserror::Error;

/// A type alias for `Result<T, Error>`.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is out of its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data violates a precondition (non-finite values, dimension
    /// mismatch between model and features, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A feature mask references positions outside the co-occurrence matrix.
    #[error("invalid mask: {0}")]
    InvalidMask(String),

    /// Training input cannot yield a usable model (e.g. a single class).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// Features presented for prediction do not match the training schema.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    /// A malformed file payload (bad magic, unsupported version, ...).
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::InvalidData(_)
            | Error::InvalidMask(_)
            | Error::DegenerateModel(_)
            | Error::SchemaMismatch(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Image(_)
            | Error::Format(_) => 2,
        }
    }
}
