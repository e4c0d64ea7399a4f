use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use swt_core::crypto::KeyId;
use swt_core::merkle::TreeState;
use swt_core::model::{Canonical, IndexKind, Millis, PackageId, PackageIndex, PackageRecord, RemovalNotice, SourcePackage};
use swt_core::tlog::{EntryKind, SignedTreeRoot};
use swt_core::Digest;

use crate::view::ReleaseView;
use crate::MonitorError;

/// One mirrored leaf. For a withdrawn source the payload is the removal notice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalEntry {
    pub kind: EntryKind,
    pub leaf_hash: Digest,
    pub payload_digest: Digest,
    pub submitted_at: Millis,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    #[serde(default)]
    pub withdrawn: bool,
}

/// Full copy of one followed log.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LocalLog {
    pub log_id: String,
    pub sth: Option<SignedTreeRoot>,
    pub entries: Vec<LocalEntry>,
    /// Last STR that failed recomputation; not alerted on twice.
    #[serde(default)]
    pub rejected: Option<SignedTreeRoot>,
    /// Entries below this index were scanned for release files.
    #[serde(default)]
    pub examined: u64,
    #[serde(skip)]
    tree: TreeState,
    #[serde(skip)]
    by_item: HashMap<(EntryKind, Digest), u64>,
    #[serde(skip)]
    sources: HashMap<PackageId, u64>,
}

impl LocalLog {
    pub fn new(log_id: impl Into<String>) -> Self {
        LocalLog { log_id: log_id.into(), ..Default::default() }
    }

    pub fn size(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn tree(&self) -> &TreeState {
        &self.tree
    }

    pub fn push(&mut self, entry: LocalEntry) {
        let index = self.size();
        self.tree.push(entry.leaf_hash);
        self.by_item.entry((entry.kind, entry.payload_digest)).or_insert(index);
        if let Some(id) = source_id(&entry) {
            self.sources.entry(id).or_insert(index);
        }
        self.entries.push(entry);
    }

    /// Rebuilds lookup tables after deserialization.
    pub fn reindex(&mut self) {
        let entries = std::mem::take(&mut self.entries);
        self.tree = TreeState::new();
        self.by_item.clear();
        self.sources.clear();
        for e in entries {
            self.push(e);
        }
    }

    /// First leaf holding this item, if it lies below `bound`.
    pub fn find(&self, kind: EntryKind, digest: &Digest, bound: u64) -> Option<u64> {
        self.by_item.get(&(kind, *digest)).copied().filter(|&i| i < bound)
    }

    pub fn entry(&self, index: u64) -> &LocalEntry {
        &self.entries[index as usize]
    }

    /// Leaf of a source package, original or withdrawn.
    pub fn source_entry(&self, id: &PackageId) -> Option<u64> {
        self.sources.get(id).copied()
    }

    /// Latest logged index of this kind and architecture below `bound`.
    pub fn latest_index(&self, kind: IndexKind, architecture: &str, bound: u64) -> Option<(u64, Digest)> {
        let bound = bound.min(self.size());
        (0..bound).rev().find_map(|i| {
            let e = self.entry(i);
            if e.kind != EntryKind::IndexFile {
                return None;
            }
            let index = PackageIndex::parse(&e.payload).ok()?;
            (index.kind == kind && index.architecture == architecture).then_some((i, e.payload_digest))
        })
    }
}

fn source_id(e: &LocalEntry) -> Option<PackageId> {
    if e.kind != EntryKind::SourcePackage {
        return None;
    }
    if e.withdrawn {
        RemovalNotice::parse(&e.payload).ok().map(|n| n.package)
    } else {
        SourcePackage::parse(&e.payload).ok().map(|s| s.id())
    }
}

/// Per-package view of the latest processed release.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageState {
    /// `name/arch` for binaries, `name/source` for sources.
    pub records: BTreeMap<String, PackageRecord>,
    /// Build environment digest per `name/arch`.
    pub environments: BTreeMap<String, Digest>,
}

pub fn record_key(r: &PackageRecord) -> String {
    format!("{}/{}", r.name, r.architecture)
}

impl PackageState {
    pub fn previous(&self, r: &PackageRecord) -> Option<&PackageRecord> {
        self.records.get(&record_key(r))
    }

    /// Records absent from the release keep their last seen value.
    pub fn apply(&mut self, view: &ReleaseView) {
        for index in view.indices.iter().filter_map(|i| i.index.as_ref()) {
            for r in &index.records {
                self.records.insert(record_key(r), r.clone());
            }
        }
        if let Some(b) = &view.buildinfo {
            for r in &b.records {
                self.environments.insert(format!("{}/{}", r.package.name, r.architecture), r.environment_digest);
            }
        }
    }
}

/// Source upload that changed in a release, with who signed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceChange {
    pub package: PackageId,
    pub digest: Digest,
    pub uploader: Option<KeyId>,
    pub entry: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub issued_at: Millis,
    pub valid_until: Millis,
    pub log_id: String,
    pub changed_sources: Vec<SourceChange>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MonitorState {
    pub logs: BTreeMap<String, LocalLog>,
    pub packages: PackageState,
    pub keylist: Option<swt_core::model::KeyList>,
    pub timeline: BTreeMap<u64, TimelineEntry>,
    /// Digest of each examined release file.
    pub releases: BTreeMap<u64, Digest>,
    /// Witnessing log id to the next leaf to inspect for witnessed roots.
    #[serde(default)]
    pub cross_cursor: BTreeMap<String, u64>,
    /// Witnessed roots ahead of the local copy of their log.
    #[serde(default)]
    pub cross_pending: BTreeMap<String, BTreeSet<u64>>,
    /// Release-scoped alerts already emitted by the periodic checks.
    #[serde(default)]
    pub reported: BTreeSet<(String, u64)>,
}

impl MonitorState {
    pub fn load(path: &Path) -> Result<Self, MonitorError> {
        match std::fs::read(path) {
            Ok(raw) => {
                let mut st: MonitorState = serde_json::from_slice(&raw).map_err(|e| MonitorError::State(e.to_string()))?;
                for log in st.logs.values_mut() {
                    log.reindex();
                }
                Ok(st)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(MonitorState::default()),
            Err(e) => Err(MonitorError::Io(e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MonitorError> {
        let json = serde_json::to_vec(self).map_err(|e| MonitorError::State(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

mod b64 {
    use serde::{Deserialize, Deserializer, Serializer};
    use swt_core::api::{b64_decode, b64_encode};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        b64_decode(&s).map_err(serde::de::Error::custom)
    }
}
