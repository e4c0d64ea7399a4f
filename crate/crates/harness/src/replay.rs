//! Plays a corpus against live log servers, an archive, an auditor and a
//! monitor, and compares what the monitor reports with the ground truth.

use std::collections::{BTreeMap, HashMap};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use swt_archive::{Archive, ArchiveOptions, CutOptions, LogTarget, PublishedRelease};
use swt_auditor::{AuditVerdict, Auditor, AuditorConfig, CheckName, PinnedState, ReleaseInput};
use swt_core::api::b64_decode;
use swt_core::bundle::{LogCommitment, ReleaseBundle, SubmittedItem};
use swt_core::client::TrafficCount;
use swt_core::clock::ManualClock;
use swt_core::model::{Canonical, IndexKind, Millis, PackageIndex, ReleaseFile};
use swt_core::policy::HOUR_MS;
use swt_core::tlog::{EntryKind, SignedTreeRoot};
use swt_core::Digest;
use swt_logserver::{Log, LogSettings, Role, RunningServer};
use swt_monitor::report::{summarize, AlertSummary};
use swt_monitor::{Alert, Monitor, MonitorConfig};
use tempfile::TempDir;

use crate::corpus::{generate, Corpus, ExpectedAlert, Keys, PlannedRelease};
use crate::scenario::{Scenario, Storage, Topology};
use crate::HarnessError;

const TOKEN: &str = "harness";
pub const COMMITTING_LOG: &str = "log-a";
pub const SECOND_LOG: &str = "log-b";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReleaseOutcome {
    pub release_id: u64,
    pub regular: Option<u64>,
    pub at: Millis,
    pub audit_ok: bool,
    /// Only for the cross-logged topology.
    pub witnessed_ok: Option<bool>,
    pub failures: Vec<String>,
}

/// What happened to the client that was served a forked log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VictimOutcome {
    pub release_id: u64,
    /// Entries the fork shares with the main log.
    pub fork_size: u64,
    pub victim_sth: SignedTreeRoot,
    pub honest_sth: SignedTreeRoot,
    /// Both views pass the single-log checks.
    pub victim_self_verified: bool,
    pub honest_self_verified: bool,
    pub victim_witnessed_ok: Option<bool>,
    pub victim_witness_failures: Vec<CheckName>,
    /// The monitor flagged the victim's root when it was presented.
    pub presented_root_flagged: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AlertComparison {
    pub expected: usize,
    pub observed: usize,
    pub missing: Vec<ExpectedAlert>,
    pub unexpected: Vec<ExpectedAlert>,
    pub exact: bool,
}

impl AlertComparison {
    pub fn new(expected: &[ExpectedAlert], observed: &[Alert]) -> Self {
        let mut left: BTreeMap<ExpectedAlert, usize> = BTreeMap::new();
        for e in expected {
            *left.entry(e.clone()).or_default() += 1;
        }
        let mut unexpected = Vec::new();
        for a in observed {
            let key = ExpectedAlert { category: a.category, release_id: a.release_id, subject: a.subject.clone() };
            match left.get_mut(&key) {
                Some(n) if *n > 0 => *n -= 1,
                _ => unexpected.push(key),
            }
        }
        let missing: Vec<ExpectedAlert> =
            left.into_iter().flat_map(|(k, n)| std::iter::repeat(k).take(n)).collect();
        AlertComparison {
            expected: expected.len(),
            observed: observed.len(),
            exact: missing.is_empty() && unexpected.is_empty(),
            missing,
            unexpected,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageSample {
    pub release_id: u64,
    pub log_id: String,
    pub tree_size: u64,
    pub blob_bytes: u64,
    pub meta_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub corpus_digest: Digest,
    pub releases: Vec<ReleaseOutcome>,
    pub victims: Vec<VictimOutcome>,
    pub comparison: AlertComparison,
    pub summary: AlertSummary,
    /// Honest auditor traffic, by endpoint path.
    pub traffic: BTreeMap<String, TrafficCount>,
    pub storage: Vec<StorageSample>,
    pub log_roots: BTreeMap<String, Digest>,
    pub monitor_roots: BTreeMap<String, Digest>,
    pub rebuilds: u64,
    pub unique_payload_bytes: u64,
    pub elapsed_ms: u64,
}

impl RunReport {
    pub fn all_audits_ok(&self) -> bool {
        self.releases.iter().all(|r| r.audit_ok && r.witnessed_ok != Some(false))
    }

    pub fn roots_match(&self) -> bool {
        !self.log_roots.is_empty() && self.log_roots == self.monitor_roots
    }
}

pub struct RunOutput {
    pub report: RunReport,
    pub alerts: Vec<Alert>,
}

/// Live deployment for one scenario. Servers stay up until it is dropped,
/// so callers can inspect the logs after [`Replay::run`].
pub struct Replay {
    pub scenario: Scenario,
    pub corpus: Corpus,
    pub keys: Keys,
    clock: Arc<ManualClock>,
    servers: Vec<RunningServer>,
    archive: Archive,
    auditor: Auditor,
    pins: PinnedState,
    published: Vec<PublishedRelease>,
    _storage: Option<TempDir>,
}

/// Distinct free ports, known before any server starts so that logs can
/// name each other as witnesses.
fn free_ports(n: usize) -> std::io::Result<Vec<u16>> {
    let held = (0..n).map(|_| TcpListener::bind("127.0.0.1:0")).collect::<Result<Vec<_>, _>>()?;
    held.iter().map(|l| Ok(l.local_addr()?.port())).collect()
}

fn witness_of(topology: Topology, log_id: &str) -> Option<&'static str> {
    match (topology, log_id) {
        (Topology::CrossLogged, COMMITTING_LOG) => Some(SECOND_LOG),
        (Topology::CrossLogged, _) => Some(COMMITTING_LOG),
        _ => None,
    }
}

impl Replay {
    pub fn new(scenario: Scenario) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let corpus = generate(&scenario);
        let keys = Keys::new();
        let clock = Arc::new(ManualClock::new(crate::corpus::T0));
        let ids: Vec<&str> = match scenario.topology {
            Topology::SingleLog => vec![COMMITTING_LOG],
            _ => vec![COMMITTING_LOG, SECOND_LOG],
        };
        let ports = free_ports(ids.len())?;
        let url = |i: usize| format!("http://127.0.0.1:{}", ports[i]);
        let storage = match scenario.storage {
            Storage::Memory => None,
            Storage::Disk => Some(tempfile::tempdir()?),
        };
        let mut servers = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            let role = if scenario.topology == Topology::CrossLogged { Role::Both } else { Role::Committing };
            let mut s = LogSettings::new(*id, log_key(id), role);
            s.tokens = vec![TOKEN.into()];
            s.archive_key = Some(keys.archive.public_key());
            if let Some(w) = witness_of(scenario.topology, id) {
                let wi = ids.iter().position(|x| *x == w).expect("witness is deployed");
                s.witness_url = Some(url(wi));
                s.trusted_logs.insert(w.to_string(), log_key(w).public_key());
            }
            let log = match &storage {
                Some(dir) => Log::open(s, clock.clone(), &dir.path().join(id))?,
                None => Log::in_memory(s, clock.clone()),
            };
            servers.push(RunningServer::start(log, &format!("127.0.0.1:{}", ports[i]), 4)?);
        }
        let targets = servers.iter().map(|s| LogTarget::new(s.log().log_id(), s.url(), s.log().public_key())).collect();
        let archive = Archive::new(
            keys.archive.clone(),
            keys.builder.clone(),
            keys.keylist(),
            targets,
            ArchiveOptions {
                token: TOKEN.into(),
                architectures: scenario.architectures.clone(),
                quorum: servers.len(),
                ..ArchiveOptions::default()
            },
        );
        let mut config = AuditorConfig::new(keys.archive.public_key());
        for s in &servers {
            let id = s.log().log_id().to_string();
            config = config.with_log(id.clone(), s.url(), s.log().public_key(), witness_of(scenario.topology, &id));
        }
        config.quorum = servers.len();
        Ok(Replay {
            scenario,
            corpus,
            keys,
            clock,
            servers,
            archive,
            auditor: Auditor::new(config),
            pins: PinnedState::default(),
            published: Vec::new(),
            _storage: storage,
        })
    }

    pub fn log(&self, log_id: &str) -> Option<&Arc<Log>> {
        self.servers.iter().map(RunningServer::log).find(|l| l.log_id() == log_id)
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn clock(&self) -> &Arc<ManualClock> {
        &self.clock
    }

    pub fn published(&self) -> &[PublishedRelease] {
        &self.published
    }

    pub fn monitor_config(&self) -> MonitorConfig {
        self.servers
            .iter()
            .fold(MonitorConfig::new(self.keys.archive.public_key()), |c, s| c.follow(s.log().log_id(), s.url(), s.log().public_key()))
    }

    pub fn run(&mut self) -> Result<RunOutput, HarnessError> {
        let started = Instant::now();
        let mut releases = Vec::new();
        let mut victims = Vec::new();
        let mut storage = Vec::new();
        for planned in self.corpus.releases.clone() {
            let (outcome, victim) = self.play(&planned)?;
            releases.push(outcome);
            victims.extend(victim);
            for s in &self.servers {
                let log = s.log();
                storage.push(StorageSample {
                    release_id: planned.release_id,
                    log_id: log.log_id().to_string(),
                    tree_size: log.size(),
                    blob_bytes: log.blob_bytes(),
                    meta_bytes: log.meta_bytes(),
                });
            }
        }

        let mut monitor = Monitor::new(self.monitor_config());
        let mut alerts = monitor.run_cycle(self.corpus.last_at() + HOUR_MS);
        for v in &mut victims {
            if let Some(a) = monitor.check_presented_root(&v.victim_sth)? {
                v.presented_root_flagged = true;
                alerts.push(a);
            }
        }
        let comparison = AlertComparison::new(&self.corpus.expected, &alerts);
        let ids = self.corpus.releases.iter().map(|r| r.release_id);
        let mut log_roots = BTreeMap::new();
        let mut monitor_roots = BTreeMap::new();
        for s in &self.servers {
            let id = s.log().log_id().to_string();
            if let Some(sth) = s.log().latest_sth() {
                log_roots.insert(id.clone(), sth.root_hash);
                if let Some(local) = monitor.local(&id) {
                    if let Ok(root) = local.tree().root_at(sth.tree_size) {
                        monitor_roots.insert(id, root);
                    }
                }
            }
        }
        let report = RunReport {
            scenario: self.scenario.clone(),
            corpus_digest: self.corpus.digest(),
            releases,
            victims,
            comparison,
            summary: summarize(&alerts, ids),
            traffic: self.auditor.traffic().snapshot().into_iter().map(|(e, c)| (e.path().to_string(), c)).collect(),
            storage,
            log_roots,
            monitor_roots,
            rebuilds: monitor.rebuilds() as u64,
            unique_payload_bytes: self.corpus.unique_payload_bytes(),
            elapsed_ms: started.elapsed().as_millis() as u64,
        };
        Ok(RunOutput { report, alerts })
    }

    fn play(&mut self, planned: &PlannedRelease) -> Result<(ReleaseOutcome, Option<VictimOutcome>), HarnessError> {
        self.clock.set(planned.at);
        for u in &planned.uploads {
            let item = self.archive.accept_upload(u.signed(&self.keys), planned.at, u.force);
            if !item.verdict.is_accepted() {
                return Err(HarnessError::Replay(format!("upload {} {} refused: {:?}", u.package, u.version, item.verdict)));
            }
        }
        let fork = if planned.equivocate {
            let a = self.log(COMMITTING_LOG).expect("committing log");
            let k = a.size();
            Some((k, a.fork(k, self.clock.clone())?, self.pins.clone()))
        } else {
            None
        };
        let opts = CutOptions { bypass_interval: planned.bypass_interval, injections: planned.injections.clone() };
        let cut = self.archive.cut_release(planned.at, &opts)?;
        if cut.release.release_id != planned.release_id {
            return Err(HarnessError::Replay(format!("archive issued release {} for planned {}", cut.release.release_id, planned.release_id)));
        }
        let input = ReleaseInput { release_bytes: &cut.release_bytes, bundle: &cut.bundle, mirror: Some(&cut.mirror) };
        let verdict = self.auditor.verify_release(&input, &mut self.pins, planned.at);
        let mut failures = describe(&verdict);
        let witnessed_ok = (self.scenario.topology == Topology::CrossLogged).then(|| {
            let w = self.auditor.verify_witnessed(&input, &mut self.pins, planned.at);
            failures.extend(describe(&w));
            w.ok
        });
        let outcome = ReleaseOutcome {
            release_id: planned.release_id,
            regular: planned.regular,
            at: planned.at,
            audit_ok: verdict.ok,
            witnessed_ok,
            failures,
        };
        let victim = match fork {
            Some((k, fork, pins)) => Some(self.serve_fork(k, fork, pins, &cut, verdict.ok)?),
            None => None,
        };
        self.published.push(cut);
        Ok((outcome, victim))
    }

    /// Replays the release on the fork with one index swapped, then hands the
    /// result to a victim auditor that talks to the fork.
    fn serve_fork(
        &self,
        k: u64,
        fork: Arc<Log>,
        victim_pins: PinnedState,
        cut: &PublishedRelease,
        honest_ok: bool,
    ) -> Result<VictimOutcome, HarnessError> {
        let main = self.log(COMMITTING_LOG).expect("committing log");
        let honest = cut.bundle.commitment(COMMITTING_LOG).ok_or_else(|| HarnessError::Replay("no commitment from the committing log".into()))?;
        let payloads = payloads_by_digest(main, honest.sth.tree_size)?;
        let arch = &self.scenario.architectures[0];

        let mut items = Vec::new();
        let mut promises = Vec::new();
        let mut victim_sth = None;
        let mut victim_release = Vec::new();
        let mut swapped = None;
        for item in &cut.bundle.items {
            let mut bytes = payloads.get(&item.digest).cloned().ok_or_else(|| HarnessError::Replay(format!("{} not in the log", item.label)))?;
            if item.kind == EntryKind::IndexFile && item.label == format!("Packages/{arch}") {
                let mut index = PackageIndex::parse(&bytes).map_err(|e| HarnessError::Replay(e.to_string()))?;
                if let Some(r) = index.records.first_mut() {
                    r.sha256 = Digest::of(b"built only for the victim");
                }
                bytes = index.canonical_bytes();
                swapped = Some((Digest::of(&bytes), bytes.len() as u64));
            }
            if item.kind == EntryKind::ReleaseFile {
                let mut release = ReleaseFile::parse(&bytes).map_err(|e| HarnessError::Replay(e.to_string()))?;
                let (sha, size) = swapped.ok_or_else(|| HarnessError::Replay("index precedes the release".into()))?;
                for r in &mut release.index_refs {
                    if r.kind == IndexKind::Packages && &r.architecture == arch {
                        r.sha256 = sha;
                        r.size = size;
                    }
                }
                release.sign(&self.keys.archive);
                bytes = release.canonical_bytes();
                victim_release = bytes.clone();
            }
            let resp = fork.submit(item.kind, &bytes, TOKEN)?;
            promises.push(resp.promise);
            if let Some(sth) = resp.sth {
                victim_sth = Some(sth);
            }
            items.push(SubmittedItem { kind: item.kind, label: item.label.clone(), digest: Digest::of(&bytes) });
        }
        let victim_sth = victim_sth.ok_or_else(|| HarnessError::Replay("fork issued no root".into()))?;
        let release_proof = fork.get_proof(&Digest::of(&victim_release), victim_sth.tree_size)?;
        let bundle = ReleaseBundle {
            release_id: cut.bundle.release_id,
            items,
            logs: vec![LogCommitment {
                log_id: COMMITTING_LOG.into(),
                promises,
                sth: victim_sth.clone(),
                release_proof,
                // The only receipt there is belongs to the main view.
                witness: honest.witness.clone(),
            }],
        };

        let server = RunningServer::start(fork, "127.0.0.1:0", 2)?;
        let mut config = AuditorConfig::new(self.keys.archive.public_key());
        for (id, trust) in &self.auditor.config().logs {
            let url = if id == COMMITTING_LOG { server.url().to_string() } else { trust.url.clone() };
            config = config.with_log(id.clone(), url, trust.public_key.clone(), trust.witness.as_deref());
        }
        let victim = Auditor::new(config);
        let input = ReleaseInput { release_bytes: &victim_release, bundle: &bundle, mirror: None };
        let at = cut.release.issued_at;
        let self_check = victim.verify_release(&input, &mut victim_pins.clone(), at);
        let witnessed = (self.scenario.topology == Topology::CrossLogged).then(|| victim.verify_witnessed(&input, &mut victim_pins.clone(), at));
        Ok(VictimOutcome {
            release_id: cut.bundle.release_id,
            fork_size: k,
            victim_sth,
            honest_sth: honest.sth.clone(),
            victim_self_verified: self_check.ok,
            honest_self_verified: honest_ok,
            victim_witnessed_ok: witnessed.as_ref().map(|w| w.ok),
            victim_witness_failures: witnessed.map(|w| w.failures.iter().map(|f| f.check).collect()).unwrap_or_default(),
            presented_root_flagged: false,
        })
    }
}

pub fn log_key(log_id: &str) -> swt_core::crypto::SigningKey {
    swt_core::crypto::SigningKey::from_seed(format!("harness-{log_id}").as_bytes())
}

fn describe(v: &AuditVerdict) -> Vec<String> {
    v.failures.iter().map(|f| format!("{:?} {}: {}", f.check, f.log_id.as_deref().unwrap_or("-"), f.detail)).collect()
}

fn payloads_by_digest(log: &Log, size: u64) -> Result<HashMap<Digest, Vec<u8>>, HarnessError> {
    let mut out = HashMap::new();
    let mut start = 0;
    while start < size {
        let batch = log.get_entries(start, size - 1)?;
        let Some(last) = batch.last() else { break };
        start = last.index + 1;
        for e in batch {
            if !e.withdrawn {
                let bytes = b64_decode(&e.payload_b64).map_err(|err| HarnessError::Replay(err.to_string()))?;
                out.insert(e.payload_digest, bytes);
            }
        }
    }
    Ok(out)
}

/// Generates, replays and reports one scenario.
pub fn run(scenario: Scenario) -> Result<RunOutput, HarnessError> {
    Replay::new(scenario)?.run()
}
