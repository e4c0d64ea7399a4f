//! The log service: sequencing, signed tree roots, proofs, source blobs,
//! removal notices, and tree-root witnessing for another log.

pub mod config;
mod service;
mod server;
mod store;

pub use crate::service::{Log, MAX_ENTRIES_PER_REQUEST};
pub use config::{LogConfig, LogSettings, Role};
pub use server::RunningServer;
pub use store::BlobStore;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("missing or invalid archive token")]
    Unauthorized,
    #[error("payload of {size} bytes exceeds the {cap} byte cap")]
    TooLarge { size: u64, cap: u64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("config: {0}")]
    Config(String),
}

impl LogError {
    pub fn status(&self) -> u16 {
        match self {
            LogError::Unauthorized => 401,
            LogError::TooLarge { .. } => 413,
            LogError::NotFound(_) => 404,
            LogError::Range(_) | LogError::BadRequest(_) => 400,
            LogError::Rejected(_) => 403,
            LogError::Unavailable(_) => 503,
            LogError::Storage(_) | LogError::Config(_) => 500,
        }
    }
}
