use thiserror::Error;

/// Errors raised while reading or writing a persisted store directory.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format version mismatch: expected {expected}, found {}", found.as_deref().unwrap_or("no header"))]
    FormatVersion { expected: String, found: Option<String> },
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}
