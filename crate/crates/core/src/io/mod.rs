//! Run configuration, snapshot files and CSV reports.

pub mod config;
pub mod report;
pub mod snapshot;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{parse_config, RunConfig};
pub use report::{write_csv, CsvTable};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotFile};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}")]
    Missing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("unsupported byte order tag {0:?}")]
    ByteOrder([u8; 4]),
    #[error("truncated snapshot: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("snapshot has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("snapshot invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;

pub(crate) fn invalid(field: impl Into<String>, message: impl std::fmt::Display) -> IoError {
    IoError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}
