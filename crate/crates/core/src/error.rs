use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in the crate.
///
/// `Parameter` means the caller asked for something outside the documented
/// domain (bad SE size, unknown preset, ...). `Data` means the inputs
/// themselves are inconsistent (mismatched mask dimensions, label out of
/// range). The remaining variants come from file ingestion and the tensor
/// container and stay distinct so callers can react to each case.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: PNG decode failed: {message}", path.display())]
    PngDecode { path: PathBuf, message: String },

    #[error("{}: unsupported PNG: {detail}", path.display())]
    UnsupportedPng { path: PathBuf, detail: String },

    #[error("bad tensor magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },

    #[error("unsupported tensor version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("truncated tensor file: need {expected} bytes, got {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("malformed tensor file: {0}")]
    MalformedTensor(String),
}

impl Error {
    /// True for errors that indicate caller misuse rather than bad data
    /// or I/O failure. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Parameter(_))
    }
}
