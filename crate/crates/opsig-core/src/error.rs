//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document (smali, manifest, table or label file).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally well-formed input that violates an IR invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// AIR document that does not conform to the schema.
    #[error("schema violation at {path}: {msg}")]
    Schema { path: String, msg: String },

    /// Two signature bundles were produced against different API tables
    /// (or different digest algorithms); scores across tables are meaningless.
    #[error("table fingerprint mismatch: {a} vs {b}")]
    TableMismatch { a: String, b: String },

    #[error("unknown hash algorithm `{0}`")]
    UnknownHashAlg(String),

    #[error("record for app {0} already stored")]
    DuplicateApp(String),

    #[error("store error: {0}")]
    Store(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
