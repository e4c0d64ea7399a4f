use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use swt_core::crypto::{PublicKey, SigningKey};
use swt_core::model::{Canonical, KeyList, VALIDITY_WINDOW_MS};
use swt_core::policy::IntervalPolicy;

use crate::{Archive, ArchiveError, ArchiveOptions, LogTarget};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogEndpoint {
    pub log_id: String,
    pub url: String,
    /// Hex SEC1 public key.
    pub public_key: String,
}

/// TOML configuration of the `swt-archive` binary. Relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveConfig {
    pub key_path: PathBuf,
    pub builder_key_path: PathBuf,
    /// Canonical key list used when no state file exists yet.
    pub keylist_path: PathBuf,
    pub state_path: PathBuf,
    pub publish_dir: PathBuf,
    pub token: String,
    #[serde(default = "default_quorum")]
    pub quorum: usize,
    #[serde(default = "default_arches")]
    pub architectures: Vec<String>,
    #[serde(default = "default_toolchain")]
    pub toolchain: String,
    #[serde(default)]
    pub policy: IntervalPolicy,
    #[serde(default = "default_listen")]
    pub listen: String,
    pub logs: Vec<LogEndpoint>,
}

fn default_quorum() -> usize {
    1
}

fn default_arches() -> Vec<String> {
    vec!["amd64".into(), "arm64".into()]
}

fn default_toolchain() -> String {
    "gcc-13".into()
}

fn default_listen() -> String {
    "127.0.0.1:8090".into()
}

fn io(path: &Path, e: impl std::fmt::Display) -> ArchiveError {
    ArchiveError::State(format!("{}: {e}", path.display()))
}

impl ArchiveConfig {
    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let mut cfg: ArchiveConfig = toml::from_str(&text).map_err(|e| io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.key_path, &mut cfg.builder_key_path, &mut cfg.keylist_path, &mut cfg.state_path, &mut cfg.publish_dir] {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    /// Builds the archive and restores its state file if present.
    pub fn open(&self) -> Result<Archive, ArchiveError> {
        let key = SigningKey::load(&self.key_path).map_err(|e| io(&self.key_path, e))?;
        let builder_key = SigningKey::load(&self.builder_key_path).map_err(|e| io(&self.builder_key_path, e))?;
        let raw = std::fs::read(&self.keylist_path).map_err(|e| io(&self.keylist_path, e))?;
        let keylist = KeyList::parse(&raw)?;
        let mut logs = Vec::new();
        for l in &self.logs {
            let pk = PublicKey::from_hex(&l.public_key).map_err(|e| ArchiveError::State(format!("log {}: {e}", l.log_id)))?;
            logs.push(LogTarget::new(l.log_id.clone(), &l.url, pk));
        }
        let options = ArchiveOptions {
            architectures: self.architectures.clone(),
            toolchain: self.toolchain.clone(),
            policy: self.policy,
            quorum: self.quorum,
            token: self.token.clone(),
            validity_ms: VALIDITY_WINDOW_MS,
            witness_wait: Duration::from_secs(5),
            publish_dir: Some(self.publish_dir.clone()),
        };
        let archive = Archive::new(key, builder_key, keylist, logs, options);
        if self.state_path.exists() {
            archive.load_state(&self.state_path)?;
        }
        Ok(archive)
    }
}
