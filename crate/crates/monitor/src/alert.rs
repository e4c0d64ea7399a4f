use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swt_core::crypto::KeyId;
use swt_core::model::PackageRecord;
use swt_core::tlog::SignedTreeRoot;
use swt_core::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    MissingIndex,
    MissingSource,
    SourceUnavailable,
    VersionNotIncremented,
    MetaChangedQuietly,
    BadMaintainerSig,
    AclViolation,
    NotReproducible,
    IrregularInterval,
    ReleaseGap,
    Equivocation,
    BadReleaseSig,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::MissingIndex,
        Category::MissingSource,
        Category::SourceUnavailable,
        Category::VersionNotIncremented,
        Category::MetaChangedQuietly,
        Category::BadMaintainerSig,
        Category::AclViolation,
        Category::NotReproducible,
        Category::IrregularInterval,
        Category::ReleaseGap,
        Category::Equivocation,
        Category::BadReleaseSig,
    ];
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blame {
    Maintainer,
    Archive,
    Log,
}

/// Material needed to reproduce a finding from log contents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertEvidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_id: Option<String>,
    /// Named digests, e.g. `claimed` and `logged`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub digests: BTreeMap<String, Digest>,
    /// Leaf indices in `log_id`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strs: Vec<SignedTreeRoot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<PackageRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keys: Vec<KeyId>,
}

impl AlertEvidence {
    pub fn in_log(log_id: &str) -> Self {
        AlertEvidence { log_id: Some(log_id.to_string()), ..Default::default() }
    }

    pub fn digest(mut self, name: &str, d: Digest) -> Self {
        self.digests.insert(name.to_string(), d);
        self
    }

    pub fn entry(mut self, index: u64) -> Self {
        self.entries.push(index);
        self
    }

    pub fn record(mut self, r: &PackageRecord) -> Self {
        self.records.push(r.clone());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_id: Option<u64>,
    /// `name/arch`, `name/source`, an index label, `keylist`, `archive` or a log id.
    pub subject: String,
    pub blamed: Blame,
    pub detail: String,
    pub evidence: AlertEvidence,
}

impl Alert {
    pub fn new(category: Category, release_id: Option<u64>, subject: impl Into<String>, blamed: Blame, detail: impl Into<String>) -> Self {
        Alert { category, release_id, subject: subject.into(), blamed, detail: detail.into(), evidence: AlertEvidence::default() }
    }

    pub fn with(mut self, evidence: AlertEvidence) -> Self {
        self.evidence = evidence;
        self
    }
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.release_id {
            Some(r) => write!(f, "[{}] release {r} {}: {}", self.category, self.subject, self.detail),
            None => write!(f, "[{}] {}: {}", self.category, self.subject, self.detail),
        }
    }
}

/// Appends alerts as JSON lines. Alerts that cannot be written stay queued
/// and are retried on the next call, so none are dropped.
#[derive(Debug)]
pub struct AlertSink {
    path: Option<PathBuf>,
    stderr: bool,
    backlog: Vec<Alert>,
}

impl AlertSink {
    pub fn json_lines(path: impl Into<PathBuf>) -> Self {
        AlertSink { path: Some(path.into()), stderr: false, backlog: Vec::new() }
    }

    pub fn stderr() -> Self {
        AlertSink { path: None, stderr: true, backlog: Vec::new() }
    }

    pub fn also_stderr(mut self) -> Self {
        self.stderr = true;
        self
    }

    pub fn backlog(&self) -> usize {
        self.backlog.len()
    }

    pub fn emit(&mut self, alerts: &[Alert]) {
        if self.stderr {
            for a in alerts {
                eprintln!("{a}");
            }
        }
        let Some(path) = &self.path else { return };
        self.backlog.extend_from_slice(alerts);
        if self.backlog.is_empty() {
            return;
        }
        let mut text = String::new();
        for a in &self.backlog {
            text.push_str(&serde_json::to_string(a).expect("alert serializes"));
            text.push('\n');
        }
        match OpenOptions::new().create(true).append(true).open(path).and_then(|mut f| f.write_all(text.as_bytes())) {
            Ok(()) => self.backlog.clear(),
            Err(e) => log::error!("alert sink {}: {e}; {} alerts queued", path.display(), self.backlog.len()),
        }
    }
}

pub fn read_alerts(path: &Path) -> std::io::Result<Vec<Alert>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}
