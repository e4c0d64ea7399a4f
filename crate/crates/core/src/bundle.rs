//! What the archive publishes next to a release: the promises and tree
//! roots it collected from each log, plus prefetched consistency proofs
//! that let clients verify offline.
//!
//! A publication directory holds:
//!
//! | file | content |
//! |---|---|
//! | `Release` | canonical [`ReleaseFile`] |
//! | `Packages.<arch>`, `Sources` | canonical indices |
//! | `Buildinfo` | canonical [`BuildinfoBundle`](crate::model::BuildinfoBundle) |
//! | `KeyList` | canonical [`KeyList`](crate::model::KeyList) |
//! | `bundle.json` | [`ReleaseBundle`] |
//! | `mirror-proofs.bin` | [`MirrorProofs`] in compact binary form |

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::merkle::{ConsistencyProof, InclusionProof};
use crate::model::{Canonical, IndexKind, ReleaseFile};
use crate::tlog::{EntryKind, InclusionPromise, SignedTreeRoot, WitnessReceipt};
use crate::Digest;

/// Number of earlier release generations covered by mirror proofs (one
/// week at four releases a day).
pub const MIRROR_GENERATIONS: usize = 28;

pub const RELEASE_FILE: &str = "Release";
pub const BUILDINFO_FILE: &str = "Buildinfo";
pub const KEYLIST_FILE: &str = "KeyList";
pub const BUNDLE_FILE: &str = "bundle.json";
pub const MIRROR_FILE: &str = "mirror-proofs.bin";

pub fn index_file_name(kind: IndexKind, architecture: &str) -> String {
    match kind {
        IndexKind::Sources => "Sources".into(),
        IndexKind::Packages => format!("Packages.{architecture}"),
    }
}

/// One item the archive submitted for a release.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmittedItem {
    pub kind: EntryKind,
    /// Human label: `Release`, `Sources`, `Packages/amd64`, `hello 1.0-1`.
    pub label: String,
    pub digest: Digest,
}

/// Everything one log handed back for a release.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogCommitment {
    pub log_id: String,
    /// Parallel to [`ReleaseBundle::items`].
    pub promises: Vec<InclusionPromise>,
    /// First tree root covering the release file.
    pub sth: SignedTreeRoot,
    pub release_proof: InclusionProof,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReceipt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseBundle {
    pub release_id: u64,
    pub items: Vec<SubmittedItem>,
    pub logs: Vec<LogCommitment>,
}

impl ReleaseBundle {
    pub fn release_item(&self) -> Option<(usize, &SubmittedItem)> {
        self.items.iter().enumerate().find(|(_, i)| i.kind == EntryKind::ReleaseFile)
    }

    pub fn commitment(&self, log_id: &str) -> Option<&LogCommitment> {
        self.logs.iter().find(|c| c.log_id == log_id)
    }
}

/// Consistency proofs from the tree sizes of recent releases to the
/// current one, per log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MirrorProofs {
    pub logs: Vec<LogMirrorProofs>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogMirrorProofs {
    pub log_id: String,
    pub tree_size: u64,
    pub proofs: Vec<ConsistencyProof>,
}

const MIRROR_MAGIC: &[u8; 6] = b"SWTMP1";

impl MirrorProofs {
    pub fn for_log(&self, log_id: &str) -> Option<&LogMirrorProofs> {
        self.logs.iter().find(|l| l.log_id == log_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MIRROR_MAGIC.to_vec();
        out.push(self.logs.len() as u8);
        for log in &self.logs {
            out.push(log.log_id.len() as u8);
            out.extend_from_slice(log.log_id.as_bytes());
            out.extend_from_slice(&log.tree_size.to_be_bytes());
            out.push(log.proofs.len() as u8);
            for p in &log.proofs {
                out.extend_from_slice(&p.to_compact());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let mut rest = bytes.strip_prefix(MIRROR_MAGIC.as_slice())?;
        let (&n_logs, r) = rest.split_first()?;
        rest = r;
        let mut logs = Vec::with_capacity(n_logs as usize);
        for _ in 0..n_logs {
            let (&id_len, r) = rest.split_first()?;
            let id = std::str::from_utf8(r.get(..id_len as usize)?).ok()?.to_string();
            let r = &r[id_len as usize..];
            let tree_size = u64::from_be_bytes(r.get(..8)?.try_into().ok()?);
            let (&count, mut r) = r[8..].split_first()?;
            let mut proofs = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let (p, next) = ConsistencyProof::from_compact(r)?;
                if p.new_size != tree_size {
                    return None;
                }
                proofs.push(p);
                r = next;
            }
            logs.push(LogMirrorProofs { log_id: id, tree_size, proofs });
            rest = r;
        }
        rest.is_empty().then_some(MirrorProofs { logs })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PublicationError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

/// A release as read back from a publication directory.
#[derive(Debug, Clone)]
pub struct Publication {
    pub dir: PathBuf,
    pub release_bytes: Vec<u8>,
    pub release: ReleaseFile,
    pub bundle: ReleaseBundle,
    pub mirror: Option<MirrorProofs>,
}

fn read(path: PathBuf) -> Result<(PathBuf, Vec<u8>), PublicationError> {
    match fs::read(&path) {
        Ok(b) => Ok((path, b)),
        Err(source) => Err(PublicationError::Io { path, source }),
    }
}

impl Publication {
    pub fn load(dir: &Path) -> Result<Self, PublicationError> {
        let (path, release_bytes) = read(dir.join(RELEASE_FILE))?;
        let release = ReleaseFile::parse(&release_bytes)
            .map_err(|e| PublicationError::Malformed { path, message: e.to_string() })?;
        let (path, raw) = read(dir.join(BUNDLE_FILE))?;
        let bundle = serde_json::from_slice(&raw).map_err(|e| PublicationError::Malformed { path, message: e.to_string() })?;
        let mirror = match fs::read(dir.join(MIRROR_FILE)) {
            Ok(b) => Some(MirrorProofs::from_bytes(&b).ok_or_else(|| PublicationError::Malformed {
                path: dir.join(MIRROR_FILE),
                message: "bad mirror proof encoding".into(),
            })?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(source) => return Err(PublicationError::Io { path: dir.join(MIRROR_FILE), source }),
        };
        Ok(Publication { dir: dir.to_path_buf(), release_bytes, release, bundle, mirror })
    }

    /// Raw bytes of another file in the directory.
    pub fn file(&self, name: &str) -> Result<Vec<u8>, PublicationError> {
        read(self.dir.join(name)).map(|(_, b)| b)
    }

    /// All publications under `root`, ordered by release id.
    pub fn load_all(root: &Path) -> Result<Vec<Publication>, PublicationError> {
        let entries = fs::read_dir(root).map_err(|source| PublicationError::Io { path: root.to_path_buf(), source })?;
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| PublicationError::Io { path: root.to_path_buf(), source })?;
            if entry.path().join(RELEASE_FILE).exists() {
                out.push(Publication::load(&entry.path())?);
            }
        }
        out.sort_by_key(|p| p.release.release_id);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merkle::{leaf_hash, TreeState};

    #[test]
    fn mirror_round_trip() {
        let tree = TreeState::from_leaf_hashes((0..300u32).map(|i| leaf_hash(&i.to_be_bytes())));
        let proofs = [17, 100, 256, 299].iter().map(|&m| tree.prove_consistency(m, 300).unwrap()).collect();
        let mp = MirrorProofs {
            logs: vec![
                LogMirrorProofs { log_id: "log-a".into(), tree_size: 300, proofs },
                LogMirrorProofs { log_id: "log-b".into(), tree_size: 5, proofs: vec![] },
            ],
        };
        let bytes = mp.to_bytes();
        assert_eq!(MirrorProofs::from_bytes(&bytes), Some(mp.clone()));
        assert_eq!(MirrorProofs::from_bytes(&bytes[..bytes.len() - 1]), None);
        let mut longer = bytes.clone();
        longer.push(0);
        assert_eq!(MirrorProofs::from_bytes(&longer), None);
        assert_eq!(mp.for_log("log-b").unwrap().tree_size, 5);
    }

    #[test]
    fn file_names() {
        assert_eq!(index_file_name(IndexKind::Packages, "arm64"), "Packages.arm64");
        assert_eq!(index_file_name(IndexKind::Sources, "source"), "Sources");
    }
}
