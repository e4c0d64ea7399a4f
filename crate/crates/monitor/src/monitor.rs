use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use swt_core::build::{BuilderOracle, HashBuilder};
use swt_core::bundle::Publication;
use swt_core::client::LogClient;
use swt_core::crypto::PublicKey;
use swt_core::model::{Canonical, Millis, ReleaseFile, RemovalNotice};
use swt_core::policy::IntervalPolicy;
use swt_core::tlog::{entry_leaf_hash, EntryKind, SignedTreeRoot};
use swt_core::Digest;

use crate::alert::{Alert, AlertEvidence, AlertSink, Blame, Category};
use crate::checks;
use crate::crosslog::{self, Committing};
use crate::state::{LocalEntry, LocalLog, MonitorState, TimelineEntry};
use crate::view::ReleaseView;
use crate::MonitorError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowedLog {
    pub log_id: String,
    pub url: String,
    pub public_key: PublicKey,
}

/// Which checks run. All are on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Checks {
    pub completeness: bool,
    pub source_available: bool,
    pub version_consistency: bool,
    pub maintainers: bool,
    pub reproducible: bool,
    pub frequency: bool,
    pub cross_log: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks { completeness: true, source_available: true, version_consistency: true, maintainers: true, reproducible: true, frequency: true, cross_log: true }
    }
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub archive_key: PublicKey,
    /// Releases are examined against the first log that carries them.
    pub logs: Vec<FollowedLog>,
    pub policy: IntervalPolicy,
    pub silence_ms: Option<Millis>,
    pub checks: Checks,
}

impl MonitorConfig {
    pub fn new(archive_key: PublicKey) -> Self {
        MonitorConfig { archive_key, logs: Vec::new(), policy: IntervalPolicy::default(), silence_ms: None, checks: Checks::default() }
    }

    pub fn follow(mut self, log_id: impl Into<String>, url: impl Into<String>, public_key: PublicKey) -> Self {
        self.logs.push(FollowedLog { log_id: log_id.into(), url: url.into(), public_key });
        self
    }

    fn key(&self, log_id: &str) -> Option<&PublicKey> {
        self.logs.iter().find(|l| l.log_id == log_id).map(|l| &l.public_key)
    }
}

pub struct Monitor {
    config: MonitorConfig,
    state: MonitorState,
    clients: BTreeMap<String, LogClient>,
    builder: Box<dyn BuilderOracle>,
    sink: Option<AlertSink>,
    rebuilds: usize,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Self {
        Self::with_state(config, MonitorState::default())
    }

    pub fn with_state(config: MonitorConfig, mut state: MonitorState) -> Self {
        let clients = config.logs.iter().map(|l| (l.log_id.clone(), LogClient::new(&l.url))).collect();
        for l in &config.logs {
            state.logs.entry(l.log_id.clone()).or_insert_with(|| LocalLog::new(&l.log_id));
        }
        Monitor { config, state, clients, builder: Box::new(HashBuilder), sink: None, rebuilds: 0 }
    }

    pub fn with_builder(mut self, builder: Box<dyn BuilderOracle>) -> Self {
        self.builder = builder;
        self
    }

    pub fn with_sink(mut self, sink: AlertSink) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn state(&self) -> &MonitorState {
        &self.state
    }

    pub fn local(&self, log_id: &str) -> Option<&LocalLog> {
        self.state.logs.get(log_id)
    }

    /// Binaries rebuilt so far by the reproducibility check.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    fn emit(&mut self, alerts: Vec<Alert>) -> Vec<Alert> {
        if let Some(sink) = &mut self.sink {
            sink.emit(&alerts);
        }
        alerts
    }

    /// Fetches the log's current tree root and every new entry, and
    /// recomputes the root. The local copy only advances on a match.
    pub fn sync(&mut self, log_id: &str) -> Result<Vec<Alert>, MonitorError> {
        let client = self.clients.get(log_id).ok_or_else(|| MonitorError::UnknownLog(log_id.into()))?;
        let key = self.config.key(log_id).expect("configured");
        let sth = client.get_sth()?;
        if sth.log_id != log_id || !sth.verify_signature(key) {
            return Err(MonitorError::BadTreeRoot(log_id.into()));
        }
        let local = self.state.logs.get(log_id).expect("created with the monitor");
        if local.rejected.as_ref() == Some(&sth) || local.sth.as_ref() == Some(&sth) {
            return Ok(Vec::new());
        }
        let old_size = local.size();
        if sth.tree_size <= old_size {
            let alert = crosslog::compare_root(local, &sth, AlertEvidence::in_log(log_id));
            let local = self.state.logs.get_mut(log_id).unwrap();
            return Ok(match alert {
                Some(a) => {
                    local.rejected = Some(sth);
                    self.emit(vec![a])
                }
                None => {
                    if sth.tree_size == old_size {
                        local.sth = Some(sth);
                    }
                    Vec::new()
                }
            });
        }
        let fetched = client.get_all_entries(old_size, sth.tree_size)?;
        let mut next = local.clone();
        let mut bad = None;
        for (offset, e) in fetched.into_iter().enumerate() {
            let index = old_size + offset as u64;
            let payload = swt_core::api::b64_decode(&e.payload_b64).map_err(|err| MonitorError::Decode(err.to_string()))?;
            let intact = e.index == index
                && if e.withdrawn {
                    RemovalNotice::parse(&payload)
                        .is_ok_and(|n| n.source_digest == e.payload_digest && n.verify_signature(&self.config.archive_key))
                } else {
                    e.leaf_hash == entry_leaf_hash(e.kind, &payload) && e.payload_digest == Digest::of(&payload)
                };
            if !intact && bad.is_none() {
                bad = Some(index);
            }
            next.push(LocalEntry { kind: e.kind, leaf_hash: e.leaf_hash, payload_digest: e.payload_digest, submitted_at: e.submitted_at, payload, withdrawn: e.withdrawn });
        }
        let recomputed = next.tree().root();
        if bad.is_none() && recomputed == sth.root_hash {
            next.sth = Some(sth);
            next.rejected = None;
            self.state.logs.insert(log_id.to_string(), next);
            return Ok(Vec::new());
        }
        let mut ev = AlertEvidence::in_log(log_id).digest("recomputed", recomputed);
        ev.strs.extend(local.sth.clone());
        ev.strs.push(sth.clone());
        ev.entries = (old_size..sth.tree_size).collect();
        let detail = match bad {
            Some(i) => format!("entry {i} does not match its leaf hash"),
            None => format!("root recomputed over entries {old_size}..{} differs from the signed root", sth.tree_size),
        };
        self.state.logs.get_mut(log_id).unwrap().rejected = Some(sth);
        Ok(self.emit(vec![Alert::new(Category::Equivocation, None, log_id, Blame::Log, detail).with(ev)]))
    }

    /// Syncs every followed log. Unreachable logs are skipped with a warning.
    pub fn sync_all(&mut self) -> Vec<Alert> {
        let ids: Vec<String> = self.config.logs.iter().map(|l| l.log_id.clone()).collect();
        let mut alerts = Vec::new();
        for id in ids {
            match self.sync(&id) {
                Ok(a) => alerts.extend(a),
                Err(e) => log::warn!("sync {id}: {e}"),
            }
        }
        alerts
    }

    /// Examines release files that appeared in the logs since the last call.
    pub fn examine_new_releases(&mut self) -> Vec<Alert> {
        let mut alerts = Vec::new();
        let ids: Vec<String> = self.config.logs.iter().map(|l| l.log_id.clone()).collect();
        for id in ids {
            let local = self.state.logs.get_mut(&id).expect("created with the monitor");
            let found: Vec<u64> = (local.examined..local.size()).filter(|&i| local.entry(i).kind == EntryKind::ReleaseFile).collect();
            local.examined = local.size();
            for leaf in found {
                let entry = self.state.logs[&id].entry(leaf);
                let (digest, payload) = (entry.payload_digest, entry.payload.clone());
                let Some(release) = self.signed_release(&payload, digest, &id, Some(leaf), &mut alerts) else { continue };
                let view = ReleaseView::from_log(&self.state.logs[&id], leaf, release);
                alerts.extend(self.examine(&view));
            }
        }
        self.emit(alerts)
    }

    /// Examines releases read from publication directories, in release order.
    pub fn replay_publications(&mut self, publications: &[Publication]) -> Vec<Alert> {
        let mut alerts = Vec::new();
        let mut ordered: Vec<&Publication> = publications.iter().collect();
        ordered.sort_by_key(|p| p.release.release_id);
        for p in ordered {
            let digest = Digest::of(&p.release_bytes);
            let Some(log_id) = self
                .config
                .logs
                .iter()
                .map(|l| &l.log_id)
                .find(|id| self.state.logs[*id].find(EntryKind::ReleaseFile, &digest, u64::MAX).is_some())
                .or(self.config.logs.first().map(|l| &l.log_id))
                .cloned()
            else {
                break;
            };
            let leaf = self.state.logs[&log_id].find(EntryKind::ReleaseFile, &digest, u64::MAX);
            if self.signed_release(&p.release_bytes, digest, &log_id, leaf, &mut alerts).is_none() {
                continue;
            }
            let view = ReleaseView::from_publication(p, &self.state.logs[&log_id]);
            alerts.extend(self.examine(&view));
        }
        self.emit(alerts)
    }

    /// Parses and signature-checks a release once. `None` for releases
    /// already examined or not signed by the archive.
    fn signed_release(&mut self, bytes: &[u8], digest: Digest, log_id: &str, leaf: Option<u64>, alerts: &mut Vec<Alert>) -> Option<ReleaseFile> {
        let parsed = ReleaseFile::parse(bytes).ok();
        if let Some(r) = &parsed {
            match self.state.releases.get(&r.release_id) {
                Some(seen) if *seen == digest => return None,
                Some(seen) => log::warn!("release {} seen as {seen} and as {digest}", r.release_id),
                None => {}
            }
        }
        match parsed.filter(|r| r.verify_signature(&self.config.archive_key)) {
            Some(r) => Some(r),
            None => {
                if self.state.reported.insert((format!("BadReleaseSig:{digest}"), 0)) {
                    let mut ev = AlertEvidence::in_log(log_id).digest("release", digest);
                    ev.entries.extend(leaf);
                    alerts.push(Alert::new(Category::BadReleaseSig, None, "Release", Blame::Archive, "logged release file does not carry a valid archive signature").with(ev));
                }
                None
            }
        }
    }

    /// Runs the per-release checks in order, then folds the release into
    /// the state. The checks only read the state.
    pub fn examine(&mut self, view: &ReleaseView) -> Vec<Alert> {
        let checks = self.config.checks;
        let st = &mut self.state;
        let log = &st.logs[&view.log_id];
        let mut alerts = Vec::new();
        if checks.completeness {
            alerts.extend(checks::check_completeness(view, log));
        }
        if checks.source_available {
            alerts.extend(checks::check_source_available(view));
        }
        if checks.version_consistency {
            alerts.extend(checks::check_version_consistency(view, &st.packages));
        }
        if checks.maintainers {
            alerts.extend(checks::check_maintainers(view, st.keylist.as_ref(), &st.packages, log));
        }
        if checks.reproducible {
            let (a, n) = checks::check_reproducible(view, &st.packages, log, self.builder.as_ref());
            alerts.extend(a);
            self.rebuilds += n;
        }
        let changed_sources = checks::changed_sources(view, &st.packages, log);
        st.timeline.insert(
            view.release_id(),
            TimelineEntry { issued_at: view.release.issued_at, valid_until: view.release.valid_until, log_id: view.log_id.clone(), changed_sources },
        );
        st.packages.apply(view);
        if view.keylist.is_some() {
            st.keylist = view.keylist.clone();
        }
        st.releases.insert(view.release_id(), view.release_digest);
        alerts
    }

    /// Frequency analysis over the release timeline. Each finding is
    /// reported once.
    pub fn check_frequency(&mut self, now: Millis) -> Vec<Alert> {
        let found = checks::check_frequency(&self.state.timeline, &self.config.policy, now, self.config.silence_ms);
        let fresh = found.into_iter().filter(|a| self.state.reported.insert((a.category.to_string(), a.release_id.unwrap_or(0)))).collect();
        self.emit(fresh)
    }

    /// Recomputes every root that a followed log witnessed for another
    /// followed log.
    pub fn check_cross_log(&mut self) -> Vec<Alert> {
        let mut alerts = Vec::new();
        for w in self.config.logs.iter().map(|l| l.log_id.clone()).collect::<Vec<_>>() {
            let witness = &self.state.logs[&w];
            let committing: BTreeMap<String, Committing<'_>> = self
                .config
                .logs
                .iter()
                .filter(|l| l.log_id != w)
                .map(|l| (l.log_id.clone(), Committing { log: &self.state.logs[&l.log_id], key: &l.public_key }))
                .collect();
            let cursor = self.state.cross_cursor.get(&w).copied().unwrap_or(0);
            let pending = self.state.cross_pending.get(&w).cloned().unwrap_or_default();
            let leaves: Vec<u64> = pending.into_iter().chain(cursor..witness.size()).collect();
            let out = crosslog::check_cross_log(witness, leaves, &committing);
            let size = witness.size();
            alerts.extend(out.alerts);
            self.state.cross_cursor.insert(w.clone(), size);
            self.state.cross_pending.insert(w, out.pending.into_iter().collect());
        }
        self.emit(alerts)
    }

    /// Checks a tree root presented by another party, such as the one in a
    /// release bundle an auditor received, against the local copy.
    pub fn check_presented_root(&mut self, sth: &SignedTreeRoot) -> Result<Option<Alert>, MonitorError> {
        let key = self.config.key(&sth.log_id).ok_or_else(|| MonitorError::UnknownLog(sth.log_id.clone()))?;
        if !sth.verify_signature(key) {
            return Err(MonitorError::BadTreeRoot(sth.log_id.clone()));
        }
        if sth.tree_size > self.state.logs[&sth.log_id].size() {
            let id = sth.log_id.clone();
            self.sync(&id)?;
        }
        let ev = AlertEvidence::in_log(&sth.log_id);
        let alert = crosslog::compare_root(&self.state.logs[&sth.log_id], sth, ev);
        Ok(alert.map(|a| self.emit(vec![a]).remove(0)))
    }

    /// One pass: sync, examine new releases, then the periodic checks.
    pub fn run_cycle(&mut self, now: Millis) -> Vec<Alert> {
        let mut alerts = self.sync_all();
        alerts.extend(self.examine_new_releases());
        if self.config.checks.frequency {
            alerts.extend(self.check_frequency(now));
        }
        if self.config.checks.cross_log {
            alerts.extend(self.check_cross_log());
        }
        alerts
    }

    pub fn into_state(self) -> MonitorState {
        self.state
    }
}
