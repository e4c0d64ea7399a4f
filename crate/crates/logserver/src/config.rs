use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swt_core::crypto::{PublicKey, SigningKey};

use crate::LogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Committing,
    Witnessing,
    Both,
}

impl Role {
    pub fn commits(self) -> bool {
        matches!(self, Role::Committing | Role::Both)
    }

    pub fn witnesses(self) -> bool {
        matches!(self, Role::Witnessing | Role::Both)
    }
}

pub const DEFAULT_MAX_BLOB_BYTES: u64 = 256 * 1024 * 1024;

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_max_blob() -> u64 {
    DEFAULT_MAX_BLOB_BYTES
}

fn default_workers() -> usize {
    8
}

/// On-disk configuration (TOML).
///
/// ```toml
/// log_id = "log-a"
/// key_path = "log-a.key"
/// role = "committing"
/// listen = "127.0.0.1:8080"
/// storage = "data/log-a"
/// tokens = ["archive-secret"]
/// archive_key = "02ab..."
/// str_interval_ms = 1000
///
/// [witness]
/// url = "http://127.0.0.1:8081"
///
/// [trusted_logs]
/// log-b = "03cd..."
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogConfig {
    pub log_id: String,
    pub key_path: PathBuf,
    pub role: Role,
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Directory for the metadata database and blobs; in-memory when absent.
    #[serde(default)]
    pub storage: Option<PathBuf>,
    #[serde(default)]
    pub tokens: Vec<String>,
    /// Archive public key (hex), used to check removal notices.
    #[serde(default)]
    pub archive_key: Option<String>,
    #[serde(default)]
    pub witness: Option<WitnessTarget>,
    /// Committing logs whose roots this log witnesses: log_id -> public key hex.
    #[serde(default)]
    pub trusted_logs: BTreeMap<String, String>,
    /// Maximum merge delay before pending entries get an STR; 0 disables the timer.
    #[serde(default)]
    pub str_interval_ms: u64,
    #[serde(default = "default_max_blob")]
    pub max_blob_bytes: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessTarget {
    pub url: String,
}

impl LogConfig {
    pub fn load(path: &Path) -> Result<Self, LogError> {
        let text = std::fs::read_to_string(path).map_err(|e| LogError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: LogConfig = toml::from_str(&text).map_err(|e| LogError::Config(e.to_string()))?;
        if let Some(dir) = path.parent() {
            cfg.key_path = dir.join(&cfg.key_path);
            cfg.storage = cfg.storage.map(|s| dir.join(s));
        }
        Ok(cfg)
    }

    pub fn settings(&self) -> Result<LogSettings, LogError> {
        let key = SigningKey::load(&self.key_path).map_err(|e| LogError::Config(e.to_string()))?;
        let archive_key = self
            .archive_key
            .as_deref()
            .map(PublicKey::from_hex)
            .transpose()
            .map_err(|e| LogError::Config(format!("archive_key: {e}")))?;
        let mut trusted_logs = BTreeMap::new();
        for (id, hex) in &self.trusted_logs {
            let pk = PublicKey::from_hex(hex).map_err(|e| LogError::Config(format!("trusted_logs.{id}: {e}")))?;
            trusted_logs.insert(id.clone(), pk);
        }
        Ok(LogSettings {
            log_id: self.log_id.clone(),
            key,
            role: self.role,
            tokens: self.tokens.clone(),
            archive_key,
            witness_url: self.witness.as_ref().map(|w| w.url.clone()),
            trusted_logs,
            str_interval_ms: self.str_interval_ms,
            max_blob_bytes: self.max_blob_bytes,
            verify_witnessed_roots: true,
        })
    }
}

/// Runtime settings with keys decoded.
#[derive(Debug, Clone)]
pub struct LogSettings {
    pub log_id: String,
    pub key: SigningKey,
    pub role: Role,
    pub tokens: Vec<String>,
    pub archive_key: Option<PublicKey>,
    pub witness_url: Option<String>,
    pub trusted_logs: BTreeMap<String, PublicKey>,
    pub str_interval_ms: u64,
    pub max_blob_bytes: u64,
    /// Test hook: a witness that skips signature checks on submitted roots.
    pub verify_witnessed_roots: bool,
}

impl LogSettings {
    pub fn new(log_id: impl Into<String>, key: SigningKey, role: Role) -> Self {
        LogSettings {
            log_id: log_id.into(),
            key,
            role,
            tokens: Vec::new(),
            archive_key: None,
            witness_url: None,
            trusted_logs: BTreeMap::new(),
            str_interval_ms: 0,
            max_blob_bytes: DEFAULT_MAX_BLOB_BYTES,
            verify_witnessed_roots: true,
        }
    }
}
