use swt_core::bundle::{index_file_name, Publication, BUILDINFO_FILE, KEYLIST_FILE};
use swt_core::model::{BuildinfoBundle, Canonical, IndexKind, IndexRef, KeyList, PackageIndex, ReleaseFile};
use swt_core::tlog::EntryKind;
use swt_core::Digest;

use crate::state::LocalLog;

/// An index the release points at, with its parsed contents when the
/// bytes were found.
#[derive(Debug, Clone)]
pub struct IndexSlot {
    pub index_ref: IndexRef,
    pub index: Option<PackageIndex>,
}

impl IndexSlot {
    pub fn label(&self) -> String {
        match self.index_ref.kind {
            IndexKind::Sources => "Sources".into(),
            IndexKind::Packages => format!("Packages/{}", self.index_ref.architecture),
        }
    }
}

/// A release file together with everything it points at.
#[derive(Debug, Clone)]
pub struct ReleaseView {
    pub release: ReleaseFile,
    pub release_digest: Digest,
    /// Log the view is checked against.
    pub log_id: String,
    /// Leaf of the release file, when logged.
    pub release_leaf: Option<u64>,
    /// Items count as logged for this release only below this leaf.
    pub bound: u64,
    pub indices: Vec<IndexSlot>,
    pub buildinfo: Option<BuildinfoBundle>,
    pub keylist: Option<KeyList>,
}

impl ReleaseView {
    /// Assembles the view from log contents alone.
    pub fn from_log(log: &LocalLog, release_leaf: u64, release: ReleaseFile) -> Self {
        let release_digest = log.entry(release_leaf).payload_digest;
        let indices = release
            .index_refs
            .iter()
            .map(|r| IndexSlot { index_ref: r.clone(), index: logged_index(log, r, release_leaf) })
            .collect();
        let buildinfo = log
            .find(EntryKind::Buildinfo, &release.buildinfo_ref, release_leaf)
            .and_then(|i| BuildinfoBundle::parse(&log.entry(i).payload).ok());
        let keylist = logged_keylist(log, &release, release_leaf);
        ReleaseView { release, release_digest, log_id: log.log_id.clone(), release_leaf: Some(release_leaf), bound: release_leaf, indices, buildinfo, keylist }
    }

    /// Assembles the view from a publication directory, falling back to
    /// log contents for files that are missing or do not match.
    pub fn from_publication(p: &Publication, log: &LocalLog) -> Self {
        let release_digest = Digest::of(&p.release_bytes);
        let release_leaf = log.find(EntryKind::ReleaseFile, &release_digest, log.size());
        let bound = release_leaf.unwrap_or(log.size());
        let matching = |name: &str, digest: &Digest| p.file(name).ok().filter(|b| &Digest::of(b) == digest);
        let indices = p
            .release
            .index_refs
            .iter()
            .map(|r| {
                let index = matching(&index_file_name(r.kind, &r.architecture), &r.sha256)
                    .and_then(|b| parse_index(&b, r))
                    .or_else(|| logged_index(log, r, bound));
                IndexSlot { index_ref: r.clone(), index }
            })
            .collect();
        let buildinfo = matching(BUILDINFO_FILE, &p.release.buildinfo_ref)
            .and_then(|b| BuildinfoBundle::parse(&b).ok())
            .or_else(|| log.find(EntryKind::Buildinfo, &p.release.buildinfo_ref, bound).and_then(|i| BuildinfoBundle::parse(&log.entry(i).payload).ok()));
        let keylist = p
            .file(KEYLIST_FILE)
            .ok()
            .and_then(|b| KeyList::parse(&b).ok())
            .filter(|k| k.id() == p.release.keylist_ref)
            .or_else(|| logged_keylist(log, &p.release, bound));
        ReleaseView { release: p.release.clone(), release_digest, log_id: log.log_id.clone(), release_leaf, bound, indices, buildinfo, keylist }
    }

    pub fn release_id(&self) -> u64 {
        self.release.release_id
    }

    pub fn sources(&self) -> Option<&PackageIndex> {
        self.indices.iter().find(|s| s.index_ref.kind == IndexKind::Sources).and_then(|s| s.index.as_ref())
    }

    pub fn packages(&self) -> impl Iterator<Item = &PackageIndex> {
        self.indices.iter().filter(|s| s.index_ref.kind == IndexKind::Packages).filter_map(|s| s.index.as_ref())
    }
}

fn parse_index(bytes: &[u8], r: &IndexRef) -> Option<PackageIndex> {
    PackageIndex::parse(bytes).ok().filter(|i| i.kind == r.kind && i.architecture == r.architecture)
}

fn logged_index(log: &LocalLog, r: &IndexRef, bound: u64) -> Option<PackageIndex> {
    log.find(EntryKind::IndexFile, &r.sha256, bound).and_then(|i| parse_index(&log.entry(i).payload, r))
}

fn logged_keylist(log: &LocalLog, release: &ReleaseFile, bound: u64) -> Option<KeyList> {
    (0..bound.min(log.size())).rev().find_map(|i| {
        let e = log.entry(i);
        if e.kind != EntryKind::KeyListPackage {
            return None;
        }
        KeyList::parse(&e.payload).ok().filter(|k| k.id() == release.keylist_ref)
    })
}
