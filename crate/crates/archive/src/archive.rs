use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use swt_core::build::{environment_digest, BuilderOracle, HashBuilder};
use swt_core::bundle::{LogCommitment, LogMirrorProofs, MirrorProofs, ReleaseBundle, SubmittedItem, MIRROR_GENERATIONS};
use swt_core::client::LogClient;
use swt_core::crypto::{PublicKey, SigningKey};
use swt_core::merkle::verify_inclusion;
use swt_core::model::{
    BuildinfoBundle, BuildinfoRecord, Canonical, IndexKind, IndexRef, KeyList, Millis, PackageId, PackageIndex,
    PackageRecord, ReleaseFile, RemovalNotice, SourcePackage, SOURCE_ARCH, VALIDITY_WINDOW_MS,
};
use swt_core::policy::{enforce_release_interval, IntervalDecision, IntervalPolicy};
use swt_core::tlog::{entry_leaf_hash, EntryKind};
use swt_core::version::VersionString;
use swt_core::Digest;

use crate::inject::CutOptions;
use crate::publish::write_publication;
use crate::upload::{check_upload, UploadQueueItem, Verdict};
use crate::ArchiveError;

/// Package name under which the key list is published.
pub const KEYLIST_PACKAGE: &str = "archive-keyring";

/// A log the archive submits to.
#[derive(Debug, Clone)]
pub struct LogTarget {
    pub log_id: String,
    pub public_key: PublicKey,
    pub client: LogClient,
}

impl LogTarget {
    pub fn new(log_id: impl Into<String>, url: &str, public_key: PublicKey) -> Self {
        LogTarget { log_id: log_id.into(), public_key, client: LogClient::new(url) }
    }
}

#[derive(Debug, Clone)]
pub struct ArchiveOptions {
    pub architectures: Vec<String>,
    pub toolchain: String,
    pub policy: IntervalPolicy,
    /// Logs that must commit a release before it is published.
    pub quorum: usize,
    pub token: String,
    pub validity_ms: Millis,
    /// How long to wait for a witness receipt the log reported as pending.
    pub witness_wait: Duration,
    /// Publication root; each release goes to `<root>/<release_id>/`.
    pub publish_dir: Option<PathBuf>,
}

impl Default for ArchiveOptions {
    fn default() -> Self {
        ArchiveOptions {
            architectures: vec!["amd64".into(), "arm64".into()],
            toolchain: "gcc-13".into(),
            policy: IntervalPolicy::default(),
            quorum: 1,
            token: String::new(),
            validity_ms: VALIDITY_WINDOW_MS,
            witness_wait: Duration::from_secs(2),
            publish_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BinaryState {
    record: PackageRecord,
    buildinfo: BuildinfoRecord,
}

/// Everything that survives between releases.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveState {
    next_release_id: u64,
    last_issued_at: Option<Millis>,
    keylist: KeyList,
    /// Current source of every package.
    sources: BTreeMap<String, SourcePackage>,
    /// Accepted since the last release.
    pending: BTreeMap<String, SourcePackage>,
    /// Keyed by `name/arch`.
    binaries: BTreeMap<String, BinaryState>,
    rebuilds: BTreeMap<String, u32>,
    /// Source digests every log has already acknowledged.
    submitted_sources: BTreeSet<Digest>,
    uploads: Vec<UploadQueueItem>,
    /// Per log, the tree size of each release's first covering root.
    release_sizes: BTreeMap<String, Vec<u64>>,
}

/// A release that made it through the pipeline.
#[derive(Debug, Clone)]
pub struct PublishedRelease {
    pub release: ReleaseFile,
    pub release_bytes: Vec<u8>,
    pub bundle: ReleaseBundle,
    pub mirror: MirrorProofs,
    pub dir: Option<PathBuf>,
    /// Built binaries of this release, by `name/arch`.
    pub binaries: BTreeMap<String, Vec<u8>>,
}

pub struct Archive {
    key: SigningKey,
    builder_key: SigningKey,
    options: ArchiveOptions,
    logs: Vec<LogTarget>,
    builder: Box<dyn BuilderOracle>,
    state: Mutex<ArchiveState>,
    // Held for the whole of cut_release so only one pipeline runs.
    pipeline: Mutex<()>,
}

fn binary_key(name: &str, arch: &str) -> String {
    format!("{name}/{arch}")
}

/// `Depends: a, b` on the first line of a source payload.
pub(crate) fn declared_depends(payload: &[u8]) -> Vec<String> {
    let first = payload.split(|&b| b == b'\n').next().unwrap_or_default();
    match std::str::from_utf8(first).ok().and_then(|l| l.strip_prefix("Depends: ")) {
        Some(list) => list.split(", ").filter(|s| !s.is_empty()).map(str::to_string).collect(),
        None => Vec::new(),
    }
}

struct Part {
    kind: EntryKind,
    label: String,
    bytes: Vec<u8>,
}

impl Archive {
    pub fn new(key: SigningKey, builder_key: SigningKey, keylist: KeyList, logs: Vec<LogTarget>, options: ArchiveOptions) -> Self {
        let state = ArchiveState {
            next_release_id: 0,
            last_issued_at: None,
            keylist,
            sources: BTreeMap::new(),
            pending: BTreeMap::new(),
            binaries: BTreeMap::new(),
            rebuilds: BTreeMap::new(),
            submitted_sources: BTreeSet::new(),
            uploads: Vec::new(),
            release_sizes: BTreeMap::new(),
        };
        Archive {
            key,
            builder_key,
            options,
            logs,
            builder: Box::new(HashBuilder),
            state: Mutex::new(state),
            pipeline: Mutex::new(()),
        }
    }

    pub fn with_builder(mut self, builder: Box<dyn BuilderOracle>) -> Self {
        self.builder = builder;
        self
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn builder_public_key(&self) -> PublicKey {
        self.builder_key.public_key()
    }

    pub fn options(&self) -> &ArchiveOptions {
        &self.options
    }

    pub fn logs(&self) -> &[LogTarget] {
        &self.logs
    }

    pub fn keylist(&self) -> KeyList {
        self.state.lock().unwrap().keylist.clone()
    }

    pub fn uploads(&self) -> Vec<UploadQueueItem> {
        self.state.lock().unwrap().uploads.clone()
    }

    pub fn current_source(&self, name: &str) -> Option<SourcePackage> {
        let st = self.state.lock().unwrap();
        st.pending.get(name).or_else(|| st.sources.get(name)).cloned()
    }

    pub fn last_issued_at(&self) -> Option<Millis> {
        self.state.lock().unwrap().last_issued_at
    }

    /// Replaces the key list. The new one has to extend the old one unless `force` is set.
    pub fn update_keylist(&self, newer: KeyList, force: bool) -> Result<(), ArchiveError> {
        newer.validate()?;
        let mut st = self.state.lock().unwrap();
        let violations = st.keylist.successor_violations(&newer);
        if !violations.is_empty() && !force {
            return Err(ArchiveError::KeyList(violations));
        }
        st.keylist = newer;
        Ok(())
    }

    /// Checks an upload against the key list. With `force`, a failing
    /// upload is queued anyway and recorded as force-accepted.
    pub fn accept_upload(&self, pkg: SourcePackage, now: Millis, force: bool) -> UploadQueueItem {
        let mut st = self.state.lock().unwrap();
        let verdict = match check_upload(&st.keylist, &pkg, now) {
            Ok(()) => Verdict::Accepted,
            Err(reason) if force => Verdict::ForceAccepted { reason },
            Err(reason) => Verdict::Rejected { reason },
        };
        let item = UploadQueueItem {
            package: pkg.id(),
            payload_digest: pkg.payload_digest(),
            uploader_key_id: pkg.uploader_key_id,
            received_at: now,
            verdict,
        };
        if item.verdict.is_accepted() {
            st.pending.insert(pkg.name.clone(), pkg);
        } else {
            log::info!("rejected upload of {}: {}", item.package, item.verdict_code());
        }
        st.uploads.push(item.clone());
        item
    }

    pub fn check_interval(&self, now: Millis) -> IntervalDecision {
        enforce_release_interval(self.last_issued_at(), now, &self.options.policy)
    }

    /// Builds, signs, submits and publishes the next release.
    pub fn cut_release(&self, now: Millis, opts: &CutOptions) -> Result<PublishedRelease, ArchiveError> {
        let _pipeline = self.pipeline.lock().unwrap();
        let mut next = self.state.lock().unwrap().clone();
        if !opts.bypass_interval {
            if let IntervalDecision::Deferred { until } = enforce_release_interval(next.last_issued_at, now, &self.options.policy) {
                return Err(ArchiveError::Deferred { until });
            }
        }
        let release_id = next.next_release_id;

        // Build changed sources for every architecture, then the forced rebuilds.
        let changed: Vec<SourcePackage> = std::mem::take(&mut next.pending).into_values().collect();
        let mut built = BTreeMap::new();
        for src in &changed {
            next.sources.insert(src.name.clone(), src.clone());
            for arch in &self.options.architectures {
                let bytes = self.build_binary(&mut next, src, arch, src.version.clone(), opts)?;
                built.insert(binary_key(&src.name, arch), bytes);
            }
        }
        for (name, arch) in opts.rebuilds() {
            let key = binary_key(name, arch);
            let src = next.sources.get(name).cloned().ok_or_else(|| ArchiveError::UnknownSource(name.into()))?;
            let old_version = next.binaries.get(&key).map(|b| b.record.version.clone()).unwrap_or(src.version.clone());
            *next.rebuilds.entry(key.clone()).or_default() += 1;
            let bytes = self.build_binary(&mut next, &src, arch, old_version, opts)?;
            built.insert(key, bytes);
        }
        for (name, arch) in opts.forged() {
            let key = binary_key(name, arch);
            if built.contains_key(&key) {
                continue;
            }
            let src = next.sources.get(name).cloned().ok_or_else(|| ArchiveError::UnknownSource(name.into()))?;
            let version = next.binaries.get(&key).map(|b| b.record.version.clone()).unwrap_or(src.version.clone());
            let bytes = self.build_binary(&mut next, &src, arch, version, opts)?;
            built.insert(key, bytes);
        }

        // Indices.
        let source_records: Vec<PackageRecord> = next
            .sources
            .values()
            .filter(|s| !opts.drops_source(&s.name))
            .map(|s| {
                let bytes = s.canonical_bytes();
                PackageRecord {
                    name: s.name.clone(),
                    version: s.version.clone(),
                    architecture: SOURCE_ARCH.into(),
                    sha256: Digest::of(&bytes),
                    size: bytes.len() as u64,
                    depends: Vec::new(),
                    source_ref: None,
                    noncritical: BTreeMap::new(),
                }
            })
            .collect();
        let mut indices = vec![PackageIndex::sorted(IndexKind::Sources, SOURCE_ARCH, source_records)];
        for arch in &self.options.architectures {
            let records = next.binaries.values().filter(|b| &b.record.architecture == arch).map(|b| b.record.clone()).collect();
            indices.push(PackageIndex::sorted(IndexKind::Packages, arch.clone(), records));
        }
        let buildinfo = BuildinfoBundle::sorted(next.binaries.values().map(|b| b.buildinfo.clone()).collect());
        let buildinfo_bytes = buildinfo.canonical_bytes();
        let keylist_bytes = next.keylist.canonical_bytes();

        let mut parts = Vec::new();
        for src in next.sources.values() {
            let bytes = src.canonical_bytes();
            if next.submitted_sources.contains(&Digest::of(&bytes)) || opts.skips_source(&src.name) {
                continue;
            }
            parts.push(Part { kind: EntryKind::SourcePackage, label: src.id().to_string(), bytes });
        }
        parts.push(Part { kind: EntryKind::KeyListPackage, label: next.keylist.id().to_string(), bytes: keylist_bytes.clone() });
        parts.push(Part { kind: EntryKind::Buildinfo, label: "Buildinfo".into(), bytes: buildinfo_bytes.clone() });
        let mut index_refs = Vec::new();
        let mut index_files = Vec::new();
        for index in &indices {
            let bytes = index.canonical_bytes();
            index_refs.push(IndexRef {
                kind: index.kind,
                architecture: index.architecture.clone(),
                sha256: Digest::of(&bytes),
                size: bytes.len() as u64,
            });
            let label = match index.kind {
                IndexKind::Sources => "Sources".to_string(),
                IndexKind::Packages => format!("Packages/{}", index.architecture),
            };
            parts.push(Part { kind: EntryKind::IndexFile, label, bytes: bytes.clone() });
            index_files.push((index.kind, index.architecture.clone(), bytes));
        }

        let mut release = ReleaseFile {
            release_id,
            issued_at: now,
            valid_until: now + self.options.validity_ms,
            index_refs,
            buildinfo_ref: Digest::of(&buildinfo_bytes),
            keylist_ref: next.keylist.id(),
            signature: swt_core::crypto::Signature([0; 64]),
        };
        release.sign(&self.key);
        release.validate()?;
        let release_bytes = release.canonical_bytes();
        parts.push(Part { kind: EntryKind::ReleaseFile, label: "Release".into(), bytes: release_bytes.clone() });

        let (commitments, failures) = self.submit_everywhere(&parts);
        if commitments.len() < self.options.quorum.max(1) {
            log::warn!("release {release_id} withheld: {}", failures.join("; "));
            return Err(ArchiveError::QuorumUnmet { ok: commitments.len(), needed: self.options.quorum.max(1), failures });
        }

        let mirror = self.mirror_proofs(&next, &commitments);
        for c in &commitments {
            next.release_sizes.entry(c.log_id.clone()).or_default().push(c.sth.tree_size);
        }
        for p in &parts {
            if p.kind == EntryKind::SourcePackage && commitments.len() == self.logs.len() {
                next.submitted_sources.insert(Digest::of(&p.bytes));
            }
        }
        next.next_release_id += 1;
        next.last_issued_at = Some(now);

        let bundle = ReleaseBundle {
            release_id,
            items: parts.iter().map(|p| SubmittedItem { kind: p.kind, label: p.label.clone(), digest: Digest::of(&p.bytes) }).collect(),
            logs: commitments,
        };
        let dir = match &self.options.publish_dir {
            Some(root) => Some(write_publication(
                root,
                &release_bytes,
                &index_files,
                &buildinfo_bytes,
                &keylist_bytes,
                &bundle,
                &mirror,
            )?),
            None => None,
        };
        {
            let mut live = self.state.lock().unwrap();
            let merged = merge_uploads(next, &live);
            *live = merged;
        }
        log::info!("published release {release_id} ({} items, {} logs)", bundle.items.len(), bundle.logs.len());
        Ok(PublishedRelease { release, release_bytes, bundle, mirror, dir, binaries: built })
    }

    fn build_binary(
        &self,
        st: &mut ArchiveState,
        src: &SourcePackage,
        arch: &str,
        version: VersionString,
        opts: &CutOptions,
    ) -> Result<Vec<u8>, ArchiveError> {
        let key = binary_key(&src.name, arch);
        let env = environment_digest(&self.options.toolchain, arch, st.rebuilds.get(&key).copied().unwrap_or(0));
        let mut bytes = self.builder.build(&src.payload, &env, arch);
        if bytes != self.builder.build(&src.payload, &env, arch) {
            return Err(ArchiveError::Nondeterministic { package: src.name.clone(), architecture: arch.into() });
        }
        if opts.forges(&src.name, arch) {
            bytes.extend_from_slice(b"\n#injected\n");
        }
        let record = PackageRecord {
            name: src.name.clone(),
            version: version.clone(),
            architecture: arch.into(),
            sha256: Digest::of(&bytes),
            size: bytes.len() as u64,
            depends: declared_depends(&src.payload),
            source_ref: Some(src.id()),
            noncritical: BTreeMap::new(),
        };
        let buildinfo = BuildinfoRecord::new_signed(PackageId::new(src.name.clone(), version), arch, env, &self.builder_key);
        st.binaries.insert(key, BinaryState { record, buildinfo });
        Ok(bytes)
    }

    /// Sends every part to every log. Returns the commitments of logs that
    /// took everything and resolved the release, plus a note per failed log.
    fn submit_everywhere(&self, parts: &[Part]) -> (Vec<LogCommitment>, Vec<String>) {
        let mut ok = Vec::new();
        let mut failures = Vec::new();
        for target in &self.logs {
            match self.submit_to(target, parts) {
                Ok(c) => ok.push(c),
                Err(e) => {
                    log::warn!("log {} failed: {e}", target.log_id);
                    failures.push(format!("{}: {e}", target.log_id));
                }
            }
        }
        (ok, failures)
    }

    fn submit_to(&self, target: &LogTarget, parts: &[Part]) -> Result<LogCommitment, String> {
        let mut promises = Vec::with_capacity(parts.len());
        let mut release_response = None;
        for part in parts {
            let resp = target.client.add_entry(part.kind, &part.bytes, &self.options.token).map_err(|e| format!("{}: {e}", part.label))?;
            let digest = Digest::of(&part.bytes);
            if resp.promise.item_digest != digest || !resp.promise.verify_signature(&target.public_key) {
                return Err(format!("{}: promise does not match the submitted item", part.label));
            }
            promises.push(resp.promise.clone());
            if part.kind == EntryKind::ReleaseFile {
                release_response = Some((resp, digest, entry_leaf_hash(part.kind, &part.bytes)));
            }
        }
        let (resp, digest, leaf) = release_response.ok_or("no release file among the parts")?;
        let sth = resp.sth.ok_or("log did not issue a tree root for the release")?;
        if !sth.verify_signature(&target.public_key) || sth.log_id != target.log_id {
            return Err("tree root signature does not verify".into());
        }
        let release_proof = target.client.get_proof(&digest, sth.tree_size).map_err(|e| format!("release proof: {e}"))?;
        if !verify_inclusion(&leaf, &release_proof, &sth.root_hash) {
            return Err("tree root does not resolve the release promise".into());
        }
        let witness = match resp.witness {
            Some(w) => Some(w),
            None if resp.witness_pending => self.await_witness(target, sth.tree_size),
            None => None,
        };
        Ok(LogCommitment { log_id: target.log_id.clone(), promises, sth, release_proof, witness })
    }

    fn await_witness(&self, target: &LogTarget, tree_size: u64) -> Option<swt_core::tlog::WitnessReceipt> {
        let deadline = Instant::now() + self.options.witness_wait;
        loop {
            match target.client.get_witness(tree_size) {
                Ok(w) => return Some(w),
                Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
                Err(e) => {
                    log::warn!("no witness receipt from {} for size {tree_size}: {e}", target.log_id);
                    return None;
                }
            }
        }
    }

    fn mirror_proofs(&self, st: &ArchiveState, commitments: &[LogCommitment]) -> MirrorProofs {
        let mut logs = Vec::new();
        for c in commitments {
            let target = self.logs.iter().find(|t| t.log_id == c.log_id).expect("commitment from a configured log");
            let sizes = st.release_sizes.get(&c.log_id).map(Vec::as_slice).unwrap_or_default();
            let start = sizes.len().saturating_sub(MIRROR_GENERATIONS);
            let mut proofs = Vec::new();
            for &old in &sizes[start..] {
                if old == 0 || old >= c.sth.tree_size {
                    continue;
                }
                match target.client.get_consistency(old, c.sth.tree_size) {
                    Ok(p) => proofs.push(p),
                    Err(e) => log::warn!("mirror proof {old}->{} from {}: {e}", c.sth.tree_size, c.log_id),
                }
            }
            logs.push(LogMirrorProofs { log_id: c.log_id.clone(), tree_size: c.sth.tree_size, proofs });
        }
        MirrorProofs { logs }
    }

    /// Withdraws a source blob from every log by submitting a signed notice.
    pub fn remove_source(&self, name: &str, version: &VersionString, reason: &str, now: Millis) -> Result<RemovalNotice, ArchiveError> {
        let src = {
            let st = self.state.lock().unwrap();
            st.sources.values().chain(st.pending.values()).find(|s| s.name == name && &s.version == version).cloned()
        };
        let src = src.ok_or_else(|| ArchiveError::UnknownSource(format!("{name} {version}")))?;
        let notice = RemovalNotice::new_signed(src.id(), Digest::of(&src.canonical_bytes()), now, reason, &self.key);
        let bytes = notice.canonical_bytes();
        let mut failures = Vec::new();
        let mut ok = 0;
        for target in &self.logs {
            match target.client.add_entry(EntryKind::RemovalNotice, &bytes, &self.options.token) {
                Ok(_) => ok += 1,
                Err(e) => failures.push(format!("{}: {e}", target.log_id)),
            }
        }
        if ok < self.options.quorum.max(1) {
            return Err(ArchiveError::QuorumUnmet { ok, needed: self.options.quorum.max(1), failures });
        }
        Ok(notice)
    }

    pub fn save_state(&self, path: &Path) -> Result<(), ArchiveError> {
        let json = serde_json::to_vec_pretty(&*self.state.lock().unwrap()).map_err(|e| ArchiveError::State(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load_state(&self, path: &Path) -> Result<(), ArchiveError> {
        let raw = std::fs::read(path)?;
        let st: ArchiveState = serde_json::from_slice(&raw).map_err(|e| ArchiveError::State(e.to_string()))?;
        *self.state.lock().unwrap() = st;
        Ok(())
    }
}

// Uploads accepted while the pipeline ran go into the next release.
fn merge_uploads(mut next: ArchiveState, live: &ArchiveState) -> ArchiveState {
    let seen = next.uploads.len();
    for item in &live.uploads[seen.min(live.uploads.len())..] {
        next.uploads.push(item.clone());
    }
    for (name, pkg) in &live.pending {
        if next.sources.get(name) != Some(pkg) {
            next.pending.insert(name.clone(), pkg.clone());
        }
    }
    next.keylist = live.keylist.clone();
    next
}

impl UploadQueueItem {
    fn verdict_code(&self) -> &'static str {
        match &self.verdict {
            Verdict::Accepted => "accepted",
            Verdict::Rejected { reason } | Verdict::ForceAccepted { reason } => reason.code(),
        }
    }
}
