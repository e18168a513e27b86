use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures reading or writing engine files.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown embedding mode byte 0x{0:02x}")]
    UnknownMode(u8),
    #[error("truncated file: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("size mismatch: header declares {expected} bytes, file has {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value in record {record} at offset {index}")]
    NonFinite { record: usize, index: usize },
    #[error("invalid header: {0}")]
    Header(String),
    #[error("manifest {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] vipera_core::Error),
}

impl StoreError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, StoreError>;
