use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::time::Duration;

use swt_core::api::{b64_encode, AddEntryResponse, EntryData};
use swt_core::client::LogClient;
use swt_core::clock::SharedClock;
use swt_core::merkle::{ConsistencyProof, InclusionProof, TreeState};
use swt_core::model::{Canonical, RemovalNotice, SourcePackage};
use swt_core::tlog::{entry_leaf_hash, EntryKind, InclusionPromise, LogEntry, SignedTreeRoot, WitnessReceipt};
use swt_core::Digest;

use crate::config::LogSettings;
use crate::store::{self, BlobStore, EntryRows, MetaStore};
use crate::LogError;

pub const MAX_ENTRIES_PER_REQUEST: u64 = 1000;

#[derive(Default)]
struct State {
    tree: TreeState,
    entries: Vec<LogEntry>,
    promises: Vec<InclusionPromise>,
    by_item: HashMap<(EntryKind, Digest), u64>,
    by_digest: HashMap<Digest, u64>,
    by_leaf: HashMap<Digest, u64>,
    sources: HashMap<(String, String), u64>,
    /// Source entry index -> removal notice bytes.
    withdrawn: HashMap<u64, Vec<u8>>,
    strs: Vec<SignedTreeRoot>,
    witness: BTreeMap<u64, WitnessReceipt>,
}

impl State {
    fn published_size(&self) -> u64 {
        self.strs.last().map_or(0, |s| s.tree_size)
    }

    fn pending(&self) -> u64 {
        self.tree.size() - self.published_size()
    }

    fn index_entry(&mut self, entry: &LogEntry, promise: InclusionPromise) {
        self.by_item.insert((entry.kind, entry.payload_digest), entry.index);
        self.by_digest.entry(entry.payload_digest).or_insert(entry.index);
        self.by_leaf.entry(entry.leaf_hash).or_insert(entry.index);
        self.entries.push(entry.clone());
        self.promises.push(promise);
    }
}

/// An append-only log instance: sequencing, proofs, storage and witnessing.
pub struct Log {
    settings: LogSettings,
    clock: SharedClock,
    state: RwLock<State>,
    meta: Option<MetaStore>,
    blobs: BlobStore,
    witness: Option<LogClient>,
    retry_tx: Mutex<Option<Sender<SignedTreeRoot>>>,
    durable: bool,
}

impl std::fmt::Debug for Log {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Log").field("log_id", &self.settings.log_id).field("size", &self.size()).finish()
    }
}

impl Log {
    /// A log kept entirely in memory.
    pub fn in_memory(settings: LogSettings, clock: SharedClock) -> Arc<Self> {
        Self::build(settings, clock, None, BlobStore::memory(), State::default())
    }

    /// Opens (or creates) a persistent log under `dir`.
    pub fn open(settings: LogSettings, clock: SharedClock, dir: &Path) -> Result<Arc<Self>, LogError> {
        std::fs::create_dir_all(dir).map_err(|e| LogError::Storage(e.to_string()))?;
        let meta = MetaStore::open(&dir.join("tree.redb"))?;
        let blobs = BlobStore::dir(&dir.join("blobs"))?;
        let state = load_state(&meta, &blobs)?;
        Ok(Self::build(settings, clock, Some(meta), blobs, state))
    }

    fn build(settings: LogSettings, clock: SharedClock, meta: Option<MetaStore>, blobs: BlobStore, state: State) -> Arc<Self> {
        let witness = settings.witness_url.as_deref().map(LogClient::new);
        let log = Arc::new(Log {
            settings,
            clock,
            state: RwLock::new(state),
            meta,
            blobs,
            witness,
            retry_tx: Mutex::new(None),
            durable: true,
        });
        if log.settings.str_interval_ms > 0 {
            spawn_str_timer(Arc::downgrade(&log), Duration::from_millis(log.settings.str_interval_ms));
        }
        if log.witness.is_some() {
            let (tx, rx) = mpsc::channel::<SignedTreeRoot>();
            *log.retry_tx.lock().unwrap() = Some(tx);
            let weak = Arc::downgrade(&log);
            std::thread::spawn(move || {
                for sth in rx {
                    let mut delay = Duration::from_millis(50);
                    loop {
                        let Some(log) = weak.upgrade() else { return };
                        if log.push_to_witness(&sth).is_ok() {
                            break;
                        }
                        drop(log);
                        std::thread::sleep(delay);
                        delay = (delay * 2).min(Duration::from_secs(2));
                    }
                }
            });
        }
        log
    }

    pub fn log_id(&self) -> &str {
        &self.settings.log_id
    }

    pub fn settings(&self) -> &LogSettings {
        &self.settings
    }

    pub fn public_key(&self) -> swt_core::crypto::PublicKey {
        self.settings.key.public_key()
    }

    /// Number of sequenced leaves (published or not).
    pub fn size(&self) -> u64 {
        self.state.read().unwrap().tree.size()
    }

    pub fn latest_sth(&self) -> Option<SignedTreeRoot> {
        self.state.read().unwrap().strs.last().cloned()
    }

    pub fn all_sths(&self) -> Vec<SignedTreeRoot> {
        self.state.read().unwrap().strs.clone()
    }

    pub fn leaf_hashes(&self) -> Vec<Digest> {
        self.state.read().unwrap().tree.leaf_hashes().to_vec()
    }

    pub fn blob_bytes(&self) -> u64 {
        self.blobs.total_bytes()
    }

    /// Size of the metadata database file, 0 when in memory.
    pub fn meta_bytes(&self) -> u64 {
        self.meta.as_ref().map_or(0, MetaStore::file_size)
    }

    /// Allocated pages of the metadata database, 0 when in memory.
    pub fn meta_allocated_bytes(&self) -> Result<u64, LogError> {
        self.meta.as_ref().map_or(Ok(0), MetaStore::allocated_bytes)
    }

    fn authorize(&self, token: &str) -> Result<(), LogError> {
        if self.settings.tokens.iter().any(|t| t == token) {
            Ok(())
        } else {
            Err(LogError::Unauthorized)
        }
    }

    /// Authenticated archive submission.
    pub fn submit(&self, kind: EntryKind, payload: &[u8], token: &str) -> Result<AddEntryResponse, LogError> {
        self.authorize(token)?;
        if !self.settings.role.commits() {
            return Err(LogError::Rejected("this log only witnesses tree roots".into()));
        }
        if kind == EntryKind::WitnessedRoot {
            return Err(LogError::BadRequest("witnessed roots go through add-witnessed-root".into()));
        }
        let (promise, leaf_hash, _) = self.append(kind, payload)?;
        let mut response = AddEntryResponse { promise, leaf_hash, sth: None, witness: None, witness_pending: false };
        if kind == EntryKind::ReleaseFile {
            let sth = self.issue_str()?;
            if self.witness.is_some() {
                match self.witness_receipt(sth.tree_size) {
                    Some(r) => response.witness = Some(r),
                    None => match self.push_to_witness(&sth) {
                        Ok(r) => response.witness = Some(r),
                        Err(e) => {
                            log::warn!("{}: witness unavailable for size {}: {e}", self.settings.log_id, sth.tree_size);
                            if let Some(tx) = self.retry_tx.lock().unwrap().as_ref() {
                                let _ = tx.send(sth.clone());
                            }
                            response.witness_pending = true;
                        }
                    },
                }
            }
            response.sth = Some(sth);
        }
        Ok(response)
    }

    /// Witness role: records another log's STR as a leaf and publishes it.
    pub fn add_witnessed_root(&self, sth: &SignedTreeRoot) -> Result<AddEntryResponse, LogError> {
        if !self.settings.role.witnesses() {
            return Err(LogError::Rejected("this log does not witness tree roots".into()));
        }
        if self.settings.verify_witnessed_roots {
            let key = self
                .settings
                .trusted_logs
                .get(&sth.log_id)
                .ok_or_else(|| LogError::Rejected(format!("unknown committing log {:?}", sth.log_id)))?;
            if !sth.verify_signature(key) {
                return Err(LogError::Rejected(format!("bad signature on tree root of {}", sth.log_id)));
            }
        }
        let (promise, leaf_hash, _) = self.append(EntryKind::WitnessedRoot, &sth.canonical_bytes())?;
        let published = self.issue_str()?;
        Ok(AddEntryResponse { promise, leaf_hash, sth: Some(published), witness: None, witness_pending: false })
    }

    fn push_to_witness(&self, sth: &SignedTreeRoot) -> Result<WitnessReceipt, LogError> {
        let client = self.witness.as_ref().ok_or_else(|| LogError::Rejected("no witness configured".into()))?;
        let resp = client.add_witnessed_root(sth).map_err(|e| LogError::Unavailable(e.to_string()))?;
        let receipt = WitnessReceipt { committed: sth.clone(), promise: resp.promise };
        if receipt.promise.item_digest != sth.digest() {
            return Err(LogError::Unavailable("witness promised a different digest".into()));
        }
        if let Some(meta) = &self.meta {
            meta.put(store::WITNESS, sth.tree_size, &serde_json::to_vec(&receipt).expect("receipt serializes"))?;
        }
        self.state.write().unwrap().witness.insert(sth.tree_size, receipt.clone());
        Ok(receipt)
    }

    pub fn witness_receipt(&self, tree_size: u64) -> Option<WitnessReceipt> {
        self.state.read().unwrap().witness.get(&tree_size).cloned()
    }

    /// Validates and sequences one payload. Returns the promise, the leaf
    /// hash and whether a new leaf was created.
    fn append(&self, kind: EntryKind, payload: &[u8]) -> Result<(InclusionPromise, Digest, bool), LogError> {
        if payload.len() as u64 > self.settings.max_blob_bytes {
            return Err(LogError::TooLarge { size: payload.len() as u64, cap: self.settings.max_blob_bytes });
        }
        let digest = Digest::of(payload);
        {
            let state = self.state.read().unwrap();
            if let Some(&index) = state.by_item.get(&(kind, digest)) {
                let i = index as usize;
                return Ok((state.promises[i].clone(), state.entries[i].leaf_hash, false));
            }
        }
        let mut source_key = None;
        let mut removal = None;
        match kind {
            EntryKind::SourcePackage => {
                let src = SourcePackage::parse(payload).map_err(|e| LogError::BadRequest(format!("source package: {e}")))?;
                source_key = Some((src.name, src.version.to_string()));
            }
            EntryKind::RemovalNotice => {
                let notice =
                    RemovalNotice::parse(payload).map_err(|e| LogError::BadRequest(format!("removal notice: {e}")))?;
                let key = self
                    .settings
                    .archive_key
                    .as_ref()
                    .ok_or_else(|| LogError::Rejected("no archive key configured for removals".into()))?;
                if !notice.verify_signature(key) {
                    return Err(LogError::Rejected("removal notice signature does not verify".into()));
                }
                let state = self.state.read().unwrap();
                let target = state
                    .sources
                    .get(&(notice.package.name.clone(), notice.package.version.to_string()))
                    .copied()
                    .ok_or_else(|| LogError::NotFound(format!("source {} was never logged", notice.package)))?;
                if state.entries[target as usize].payload_digest != notice.source_digest {
                    return Err(LogError::Rejected("removal notice names a different source digest".into()));
                }
                removal = Some((target, notice.source_digest));
            }
            _ => {}
        }
        self.blobs.put(&digest, payload)?;

        let mut state = self.state.write().unwrap();
        // Lost a race with an identical submission.
        if let Some(&index) = state.by_item.get(&(kind, digest)) {
            let i = index as usize;
            return Ok((state.promises[i].clone(), state.entries[i].leaf_hash, false));
        }
        let now = self.clock.now_ms();
        let leaf_hash = entry_leaf_hash(kind, payload);
        let index = state.tree.size();
        let entry = LogEntry { index, kind, payload_digest: digest, leaf_hash, submitted_at: now };
        let promise = InclusionPromise::new_signed(now, digest, &self.settings.log_id, &self.settings.key);
        if let Some(meta) = &self.meta {
            let entry_json = serde_json::to_vec(&entry).expect("entry serializes");
            let promise_json = serde_json::to_vec(&promise).expect("promise serializes");
            meta.append_entries(&[EntryRows { index, leaf: leaf_hash, entry_json: &entry_json, promise_json: &promise_json }], self.durable)?;
            if let Some((target, _)) = removal {
                meta.put(store::WITHDRAWN, target, payload)?;
            }
        }
        state.tree.push(leaf_hash);
        state.index_entry(&entry, promise.clone());
        if let Some(key) = source_key {
            state.sources.insert(key, index);
        }
        if let Some((target, _)) = removal {
            state.withdrawn.insert(target, payload.to_vec());
        }
        drop(state);
        if let Some((_, source_digest)) = removal {
            self.blobs.remove(&source_digest)?;
        }
        Ok((promise, leaf_hash, true))
    }

    /// Publishes an STR over everything sequenced so far. Returns the
    /// latest STR unchanged when nothing is pending.
    pub fn issue_str(&self) -> Result<SignedTreeRoot, LogError> {
        let mut state = self.state.write().unwrap();
        if state.pending() == 0 {
            if let Some(s) = state.strs.last() {
                return Ok(s.clone());
            }
        }
        let sth = SignedTreeRoot::new_signed(
            &self.settings.log_id,
            state.tree.size(),
            state.tree.root(),
            self.clock.now_ms(),
            &self.settings.key,
        );
        if let Some(meta) = &self.meta {
            meta.put(store::STRS, sth.tree_size, &serde_json::to_vec(&sth).expect("sth serializes"))?;
        }
        state.strs.push(sth.clone());
        Ok(sth)
    }

    pub fn flush(&self, token: &str) -> Result<SignedTreeRoot, LogError> {
        self.authorize(token)?;
        self.issue_str()
    }

    /// Latest STR, creating the first one for an empty log.
    pub fn get_sth(&self) -> Result<SignedTreeRoot, LogError> {
        match self.latest_sth() {
            Some(s) => Ok(s),
            None => self.issue_str(),
        }
    }

    /// Looks the item up by payload digest first, then by leaf hash.
    pub fn get_proof(&self, hash: &Digest, tree_size: u64) -> Result<InclusionProof, LogError> {
        let state = self.state.read().unwrap();
        let published = state.published_size();
        if tree_size > published {
            return Err(LogError::Range(format!("tree_size {tree_size} exceeds published size {published}")));
        }
        let index = state
            .by_digest
            .get(hash)
            .or_else(|| state.by_leaf.get(hash))
            .copied()
            .ok_or_else(|| LogError::NotFound(format!("no entry with hash {hash}")))?;
        if index >= tree_size {
            return Err(LogError::NotFound(format!("entry {index} is not covered by tree size {tree_size}")));
        }
        state.tree.prove_inclusion(index, tree_size).map_err(|e| LogError::Range(e.to_string()))
    }

    pub fn get_consistency(&self, first: u64, second: u64) -> Result<ConsistencyProof, LogError> {
        let state = self.state.read().unwrap();
        let published = state.published_size();
        if second > published {
            return Err(LogError::Range(format!("second {second} exceeds published size {published}")));
        }
        state.tree.prove_consistency(first, second).map_err(|e| LogError::Range(e.to_string()))
    }

    /// Entries `start..=end`, capped at [`MAX_ENTRIES_PER_REQUEST`].
    pub fn get_entries(&self, start: u64, end: u64) -> Result<Vec<EntryData>, LogError> {
        let state = self.state.read().unwrap();
        let published = state.published_size();
        if start > end || end >= published {
            return Err(LogError::Range(format!("range [{start}, {end}] outside published size {published}")));
        }
        let end = end.min(start + MAX_ENTRIES_PER_REQUEST - 1);
        let mut out = Vec::with_capacity((end - start + 1) as usize);
        for index in start..=end {
            let entry = &state.entries[index as usize];
            let (payload, withdrawn) = match state.withdrawn.get(&index) {
                Some(notice) => (notice.clone(), true),
                None => {
                    let bytes = self
                        .blobs
                        .get(&entry.payload_digest)?
                        .ok_or_else(|| LogError::Storage(format!("blob {} missing", entry.payload_digest)))?;
                    (bytes, false)
                }
            };
            out.push(EntryData {
                index,
                kind: entry.kind,
                leaf_hash: entry.leaf_hash,
                payload_digest: entry.payload_digest,
                submitted_at: entry.submitted_at,
                payload_b64: b64_encode(&payload),
                withdrawn,
            });
        }
        Ok(out)
    }

    pub fn get_source(&self, name: &str, version: &str) -> Result<Result<Vec<u8>, Vec<u8>>, LogError> {
        let state = self.state.read().unwrap();
        let index = *state
            .sources
            .get(&(name.to_string(), version.to_string()))
            .ok_or_else(|| LogError::NotFound(format!("source {name} {version} was never logged")))?;
        if let Some(notice) = state.withdrawn.get(&index) {
            return Ok(Err(notice.clone()));
        }
        let digest = state.entries[index as usize].payload_digest;
        drop(state);
        let blob = self.blobs.get(&digest)?.ok_or_else(|| LogError::Storage(format!("blob {digest} missing")))?;
        Ok(Ok(blob))
    }

    /// Sequences many payloads in one storage transaction, without
    /// promises being returned. Used to grow large trees quickly.
    pub fn bulk_append(&self, items: &[(EntryKind, Vec<u8>)]) -> Result<(), LogError> {
        let now = self.clock.now_ms();
        let mut state = self.state.write().unwrap();
        let mut rows_json = Vec::with_capacity(items.len());
        let mut fresh: Vec<(LogEntry, InclusionPromise)> = Vec::with_capacity(items.len());
        let mut seen = std::collections::HashSet::new();
        for (kind, payload) in items {
            let digest = Digest::of(payload);
            if state.by_item.contains_key(&(*kind, digest)) || !seen.insert((*kind, digest)) {
                continue;
            }
            self.blobs.put(&digest, payload)?;
            let index = state.tree.size() + fresh.len() as u64;
            let entry = LogEntry { index, kind: *kind, payload_digest: digest, leaf_hash: entry_leaf_hash(*kind, payload), submitted_at: now };
            let promise = InclusionPromise::new_signed(now, digest, &self.settings.log_id, &self.settings.key);
            rows_json.push((serde_json::to_vec(&entry).unwrap(), serde_json::to_vec(&promise).unwrap()));
            fresh.push((entry, promise));
        }
        if let Some(meta) = &self.meta {
            let rows: Vec<EntryRows<'_>> = fresh
                .iter()
                .zip(&rows_json)
                .map(|((e, _), (ej, pj))| EntryRows { index: e.index, leaf: e.leaf_hash, entry_json: ej, promise_json: pj })
                .collect();
            meta.append_entries(&rows, false)?;
        }
        for (entry, promise) in fresh {
            state.tree.push(entry.leaf_hash);
            state.index_entry(&entry, promise);
        }
        Ok(())
    }

    /// Test hook: a second log with the same identity and key that shares
    /// the first `k` entries with this one. Models a log that equivocates.
    pub fn fork(&self, k: u64, clock: SharedClock) -> Result<Arc<Log>, LogError> {
        let mut settings = self.settings.clone();
        settings.witness_url = None;
        settings.str_interval_ms = 0;
        let fork = Log::in_memory(settings, clock);
        let state = self.state.read().unwrap();
        for entry in state.entries.iter().take(k as usize) {
            let payload = match state.withdrawn.get(&entry.index) {
                Some(_) => return Err(LogError::Rejected("cannot fork across a removal".into())),
                None => self.blobs.get(&entry.payload_digest)?.expect("blob present"),
            };
            fork.blobs.put(&entry.payload_digest, &payload)?;
            let mut fs = fork.state.write().unwrap();
            fs.tree.push(entry.leaf_hash);
            let i = entry.index as usize;
            fs.index_entry(entry, state.promises[i].clone());
            if entry.kind == EntryKind::SourcePackage {
                if let Ok(src) = SourcePackage::parse(&payload) {
                    fs.sources.insert((src.name, src.version.to_string()), entry.index);
                }
            }
        }
        Ok(fork)
    }

    /// Test hook: rewrites the payload of leaf `index` and signs a new STR
    /// over the altered tree. A log that does this breaks append-only.
    pub fn rewrite_leaf(&self, index: u64, payload: &[u8]) -> Result<SignedTreeRoot, LogError> {
        {
            let mut state = self.state.write().unwrap();
            let i = index as usize;
            if i >= state.entries.len() {
                return Err(LogError::Range(format!("no leaf {index}")));
            }
            let kind = state.entries[i].kind;
            let digest = Digest::of(payload);
            self.blobs.put(&digest, payload)?;
            let leaf = entry_leaf_hash(kind, payload);
            state.entries[i].payload_digest = digest;
            state.entries[i].leaf_hash = leaf;
            let mut leaves = state.tree.leaf_hashes().to_vec();
            leaves[i] = leaf;
            state.tree = TreeState::from_leaf_hashes(leaves);
            let sth = SignedTreeRoot::new_signed(
                &self.settings.log_id,
                state.tree.size(),
                state.tree.root(),
                self.clock.now_ms(),
                &self.settings.key,
            );
            state.strs.push(sth);
        }
        Ok(self.latest_sth().expect("just issued"))
    }
}

fn spawn_str_timer(log: Weak<Log>, every: Duration) {
    std::thread::spawn(move || loop {
        std::thread::sleep(every);
        let Some(log) = log.upgrade() else { return };
        let pending = log.state.read().unwrap().pending();
        if pending > 0 {
            if let Err(e) = log.issue_str() {
                log::error!("{}: timed STR failed: {e}", log.settings.log_id);
            }
        }
    });
}

fn load_state(meta: &MetaStore, blobs: &BlobStore) -> Result<State, LogError> {
    let mut state = State::default();
    let decode = |what: &str, e: serde_json::Error| LogError::Storage(format!("corrupt {what}: {e}"));
    let entries = meta.scan(store::ENTRIES)?;
    let promises = meta.scan(store::PROMISES)?;
    if entries.len() != promises.len() {
        return Err(LogError::Storage("entry and promise tables disagree".into()));
    }
    for ((i, ej), (_, pj)) in entries.into_iter().zip(promises) {
        let entry: LogEntry = serde_json::from_slice(&ej).map_err(|e| decode("entry", e))?;
        let promise: InclusionPromise = serde_json::from_slice(&pj).map_err(|e| decode("promise", e))?;
        if entry.index != i || i != state.tree.size() {
            return Err(LogError::Storage(format!("entry table has a gap at {i}")));
        }
        state.tree.push(entry.leaf_hash);
        state.index_entry(&entry, promise);
    }
    for (index, notice) in meta.scan(store::WITHDRAWN)? {
        state.withdrawn.insert(index, notice);
    }
    for entry in state.entries.iter().filter(|e| e.kind == EntryKind::SourcePackage) {
        let name_version = match state.withdrawn.get(&entry.index) {
            Some(n) => RemovalNotice::parse(n).map(|n| (n.package.name, n.package.version.to_string())),
            None => {
                let blob = blobs.get(&entry.payload_digest)?.ok_or_else(|| LogError::Storage("source blob missing".into()))?;
                SourcePackage::parse(&blob).map(|s| (s.name, s.version.to_string()))
            }
        }
        .map_err(|e| LogError::Storage(e.to_string()))?;
        state.sources.insert(name_version, entry.index);
    }
    for (_, sj) in meta.scan(store::STRS)? {
        state.strs.push(serde_json::from_slice(&sj).map_err(|e| decode("sth", e))?);
    }
    for (size, rj) in meta.scan(store::WITNESS)? {
        state.witness.insert(size, serde_json::from_slice(&rj).map_err(|e| decode("witness receipt", e))?);
    }
    Ok(state)
}
