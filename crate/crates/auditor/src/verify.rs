use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use swt_core::bundle::{LogCommitment, MirrorProofs, Publication, ReleaseBundle};
use swt_core::client::{ClientError, LogClient, Traffic};
use swt_core::crypto::PublicKey;
use swt_core::merkle::{verify_consistency, verify_inclusion, ConsistencyProof};
use swt_core::model::{Canonical, Millis, ReleaseFile};
use swt_core::tlog::{entry_leaf_hash, EntryKind, SignedTreeRoot};
use swt_core::Digest;

use crate::evidence::{release_b64, CheckName, Evidence, EvidenceKeys};
use crate::{AuditError, AuditVerdict, Failure, PinnedState};

pub const DEFAULT_SKEW_MS: Millis = 10 * 60 * 1000;

/// What to do when the witnessing log cannot be reached.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessPolicy {
    /// Accept with `witness_unverified` set and a warning.
    #[default]
    FailOpen,
    FailClosed,
}

#[derive(Debug, Clone)]
pub struct LogTrust {
    pub url: String,
    pub public_key: PublicKey,
    /// Log id of the log that witnesses this one's roots.
    pub witness: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AuditorConfig {
    pub archive_key: PublicKey,
    /// Committing and witnessing logs, by log id.
    pub logs: BTreeMap<String, LogTrust>,
    pub quorum: usize,
    pub skew_ms: Millis,
    pub witness_policy: WitnessPolicy,
    /// Never contact logs; only bundled and mirrored proofs are used.
    pub offline: bool,
}

impl AuditorConfig {
    pub fn new(archive_key: PublicKey) -> Self {
        AuditorConfig {
            archive_key,
            logs: BTreeMap::new(),
            quorum: 1,
            skew_ms: DEFAULT_SKEW_MS,
            witness_policy: WitnessPolicy::default(),
            offline: false,
        }
    }

    pub fn with_log(mut self, log_id: impl Into<String>, url: impl Into<String>, public_key: PublicKey, witness: Option<&str>) -> Self {
        self.logs.insert(log_id.into(), LogTrust { url: url.into(), public_key, witness: witness.map(str::to_string) });
        self
    }

    pub fn evidence_keys(&self) -> EvidenceKeys {
        EvidenceKeys {
            archive: self.archive_key.clone(),
            logs: self.logs.iter().map(|(id, t)| (id.clone(), t.public_key.clone())).collect(),
        }
    }
}

/// The parts of a publication the auditor looks at.
#[derive(Debug, Clone, Copy)]
pub struct ReleaseInput<'a> {
    pub release_bytes: &'a [u8],
    pub bundle: &'a ReleaseBundle,
    pub mirror: Option<&'a MirrorProofs>,
}

impl<'a> ReleaseInput<'a> {
    pub fn from_publication(p: &'a Publication) -> Self {
        ReleaseInput { release_bytes: &p.release_bytes, bundle: &p.bundle, mirror: p.mirror.as_ref() }
    }
}

pub fn load_mirror_proofs(dir: &Path) -> Result<Option<MirrorProofs>, AuditError> {
    Ok(Publication::load(dir)?.mirror)
}

pub struct Auditor {
    config: AuditorConfig,
    clients: BTreeMap<String, LogClient>,
    traffic: Traffic,
}

fn fail(v: &mut AuditVerdict, check: CheckName, log_id: &str, detail: impl Into<String>, evidence: Evidence) {
    v.failures.push(Failure { check, log_id: Some(log_id.to_string()), detail: detail.into(), evidence });
}

fn unreachable(v: &mut AuditVerdict, log_id: &str, client: &LogClient, e: &ClientError) {
    fail(
        v,
        CheckName::Reachability,
        log_id,
        e.to_string(),
        Evidence::Unreachable { endpoint: client.base_url().to_string(), message: e.to_string() },
    );
}

// Outcome of checking a root against a pin: `Some(root)` means advance the
// pin to it, `None` means the check passed but the pin stays.
type PinAdvance = Option<SignedTreeRoot>;

impl Auditor {
    pub fn new(config: AuditorConfig) -> Self {
        let traffic = Traffic::default();
        let clients = config.logs.iter().map(|(id, t)| (id.clone(), LogClient::with_traffic(&t.url, traffic.clone()))).collect();
        Auditor { config, clients, traffic }
    }

    pub fn config(&self) -> &AuditorConfig {
        &self.config
    }

    /// Request and response byte counts per endpoint since creation.
    pub fn traffic(&self) -> &Traffic {
        &self.traffic
    }

    fn check_release(&self, bytes: &[u8], now: Millis, v: &mut AuditVerdict) -> Option<ReleaseFile> {
        let b64 = release_b64(bytes);
        let release = match ReleaseFile::parse(bytes) {
            Ok(r) => r,
            Err(e) => {
                v.failures.push(Failure {
                    check: CheckName::ReleaseSignature,
                    log_id: None,
                    detail: format!("unparseable release: {e}"),
                    evidence: Evidence::BadReleaseSignature { release_b64: b64 },
                });
                return None;
            }
        };
        if !release.verify_signature(&self.config.archive_key) {
            v.failures.push(Failure {
                check: CheckName::ReleaseSignature,
                log_id: None,
                detail: "release is not signed by the archive key".into(),
                evidence: Evidence::BadReleaseSignature { release_b64: b64 },
            });
            return None;
        }
        if !release.is_valid_at(now, self.config.skew_ms) {
            v.failures.push(Failure {
                check: CheckName::Validity,
                log_id: None,
                detail: format!("release {} not valid at {now} (valid {}..{})", release.release_id, release.issued_at, release.valid_until),
                evidence: Evidence::Expired { release_b64: b64, now, skew: self.config.skew_ms },
            });
            return None;
        }
        Some(release)
    }

    /// Checks promise, tree root signature and inclusion of the release
    /// under the commitment's root.
    fn check_commitment(&self, c: &LogCommitment, input: &ReleaseInput<'_>, v: &mut AuditVerdict) -> bool {
        let trust = &self.config.logs[&c.log_id];
        let client = &self.clients[&c.log_id];
        let Some((idx, _)) = input.bundle.release_item() else {
            fail(v, CheckName::Promise, &c.log_id, "bundle lists no release file", Evidence::Unreachable {
                endpoint: "bundle".into(),
                message: "no release item".into(),
            });
            return false;
        };
        let digest = Digest::of(input.release_bytes);
        let Some(promise) = c.promises.get(idx) else {
            fail(v, CheckName::Promise, &c.log_id, "no promise for the release", Evidence::Unreachable {
                endpoint: "bundle".into(),
                message: "missing promise".into(),
            });
            return false;
        };
        if promise.log_id != c.log_id || !promise.verify_signature(&trust.public_key) {
            fail(v, CheckName::Promise, &c.log_id, "promise signature", Evidence::BadPromiseSignature { promise: promise.clone() });
            return false;
        }
        if promise.item_digest != digest {
            fail(
                v,
                CheckName::Promise,
                &c.log_id,
                format!("promise covers {} but the release hashes to {digest}", promise.item_digest),
                Evidence::PromiseMismatch { promise: promise.clone(), release_b64: release_b64(input.release_bytes) },
            );
            return false;
        }
        if c.sth.log_id != c.log_id || !c.sth.verify_signature(&trust.public_key) {
            fail(v, CheckName::Inclusion, &c.log_id, "tree root signature", Evidence::BadTreeRootSignature { sth: c.sth.clone() });
            return false;
        }
        let proof = if self.config.offline {
            c.release_proof.clone()
        } else {
            match client.get_proof(&digest, c.sth.tree_size) {
                Ok(p) => p,
                Err(e) if e.is_not_found() => c.release_proof.clone(),
                Err(e) => {
                    unreachable(v, &c.log_id, client, &e);
                    return false;
                }
            }
        };
        let leaf = entry_leaf_hash(EntryKind::ReleaseFile, input.release_bytes);
        if proof.tree_size != c.sth.tree_size || !verify_inclusion(&leaf, &proof, &c.sth.root_hash) {
            fail(v, CheckName::Inclusion, &c.log_id, format!("release not included at size {}", c.sth.tree_size), Evidence::InclusionFailed {
                sth: c.sth.clone(),
                leaf,
                proof,
            });
            return false;
        }
        true
    }

    /// Consistency from `pin` to `sth`. Returns `None` on failure.
    fn check_consistency(
        &self,
        log_id: &str,
        pin: Option<&SignedTreeRoot>,
        sth: &SignedTreeRoot,
        mirror: Option<&MirrorProofs>,
        check: CheckName,
        v: &mut AuditVerdict,
    ) -> Option<PinAdvance> {
        let Some(pin) = pin else { return Some(Some(sth.clone())) };
        let client = &self.clients[log_id];
        if pin.tree_size == sth.tree_size {
            if pin.root_hash == sth.root_hash {
                return Some(Some(sth.clone()));
            }
            fail(v, check, log_id, "two roots for the same tree size", Evidence::SplitView { first: pin.clone(), second: sth.clone() });
            return None;
        }
        let (old, new) = if pin.tree_size < sth.tree_size { (pin, sth) } else { (sth, pin) };
        let mirrored = mirror
            .and_then(|m| m.for_log(log_id))
            .filter(|m| m.tree_size == new.tree_size)
            .and_then(|m| m.proofs.iter().find(|p| p.old_size == old.tree_size))
            .cloned();
        let proof: ConsistencyProof = match mirrored {
            Some(p) => p,
            None if self.config.offline => {
                fail(v, CheckName::Reachability, log_id, format!("offline and no mirrored proof from {}", old.tree_size), Evidence::Unreachable {
                    endpoint: client.base_url().to_string(),
                    message: "fallback required".into(),
                });
                return None;
            }
            None => {
                if mirror.is_some() {
                    v.fallbacks += 1;
                }
                match client.get_consistency(old.tree_size, new.tree_size) {
                    Ok(p) => p,
                    Err(e) => {
                        unreachable(v, log_id, client, &e);
                        return None;
                    }
                }
            }
        };
        let sizes_match = proof.old_size == old.tree_size && proof.new_size == new.tree_size;
        if !sizes_match || !verify_consistency(&old.root_hash, &new.root_hash, &proof) {
            fail(v, check, log_id, format!("no consistency from {} to {}", old.tree_size, new.tree_size), Evidence::ConsistencyFailed {
                old: old.clone(),
                new: new.clone(),
                proof,
            });
            return None;
        }
        // A pin newer than the offered root stays where it is.
        Some((new == sth).then(|| sth.clone()))
    }

    /// Steps 1 to 4 per log; ok when at least `quorum` logs pass them all.
    pub fn verify_release(&self, input: &ReleaseInput<'_>, pins: &mut PinnedState, now: Millis) -> AuditVerdict {
        let mut v = AuditVerdict::default();
        let release_ok = self.check_release(input.release_bytes, now, &mut v).is_some();
        let mut advances = Vec::new();
        for c in &input.bundle.logs {
            if !self.config.logs.contains_key(&c.log_id) {
                continue;
            }
            if !self.check_commitment(c, input, &mut v) {
                continue;
            }
            let Some(adv) = self.check_consistency(&c.log_id, pins.logs.get(&c.log_id), &c.sth, input.mirror, CheckName::Consistency, &mut v)
            else {
                continue;
            };
            v.passed.push(c.log_id.clone());
            advances.extend(adv);
        }
        v.ok = release_ok && v.passed.len() >= self.config.quorum.max(1);
        if v.ok {
            for sth in advances {
                pins.logs.insert(sth.log_id.clone(), sth);
            }
        }
        v
    }

    /// The committed root of every witnessed log in the bundle must sit in
    /// its witnessing log, consistently with the witness pin.
    pub fn verify_witnessed(&self, input: &ReleaseInput<'_>, pins: &mut PinnedState, now: Millis) -> AuditVerdict {
        let _ = now;
        let mut v = AuditVerdict::default();
        let mut checked = 0;
        let mut log_advances = Vec::new();
        let mut witness_advances = Vec::new();
        for c in &input.bundle.logs {
            let Some(wid) = self.config.logs.get(&c.log_id).and_then(|t| t.witness.clone()) else { continue };
            let Some(wtrust) = self.config.logs.get(&wid) else { continue };
            checked += 1;
            let failures_before = v.failures.len();

            // (1) release included at exactly the committed size.
            let committed_ok = self.check_commitment(c, input, &mut v);
            // (2) committing-log consistency from the pin.
            if committed_ok {
                if let Some(adv) =
                    self.check_consistency(&c.log_id, pins.logs.get(&c.log_id), &c.sth, input.mirror, CheckName::Consistency, &mut v)
                {
                    log_advances.extend(adv);
                }
            }
            if let Some(r) = &c.witness {
                if r.promise.log_id != wid || !r.verify(&wtrust.public_key) {
                    fail(&mut v, CheckName::WitnessReceipt, &c.log_id, "witness receipt signature", Evidence::BadPromiseSignature {
                        promise: r.promise.clone(),
                    });
                } else if r.committed != c.sth {
                    let evidence = if r.committed.log_id == c.sth.log_id && r.committed.tree_size == c.sth.tree_size {
                        Evidence::SplitView { first: c.sth.clone(), second: r.committed.clone() }
                    } else {
                        Evidence::NotWitnessed { committed: c.sth.clone(), receipt: Some(r.clone()), witness_sth: None }
                    };
                    fail(&mut v, CheckName::WitnessReceipt, &c.log_id, "witness receipt is for a different root", evidence);
                }
            }

            // (3) the committed root is a leaf of the witnessing log.
            let wclient = &self.clients[&wid];
            let wsth = if self.config.offline { Err(None) } else { wclient.get_sth().map_err(Some) };
            let wsth = match wsth {
                Ok(s) => s,
                Err(e) => {
                    v.witness_unverified = true;
                    let message = e.map_or("offline".to_string(), |e| e.to_string());
                    log::warn!("witness {wid} not consulted: {message}");
                    if self.config.witness_policy == WitnessPolicy::FailClosed {
                        fail(&mut v, CheckName::Reachability, &wid, message.clone(), Evidence::Unreachable {
                            endpoint: wclient.base_url().to_string(),
                            message,
                        });
                    } else if v.failures.len() == failures_before {
                        v.passed.push(c.log_id.clone());
                    }
                    continue;
                }
            };
            if wsth.log_id != wid || !wsth.verify_signature(&wtrust.public_key) {
                fail(&mut v, CheckName::WitnessInclusion, &wid, "witness tree root signature", Evidence::BadTreeRootSignature { sth: wsth });
                continue;
            }
            let item = c.sth.digest();
            let leaf = entry_leaf_hash(EntryKind::WitnessedRoot, &c.sth.canonical_bytes());
            match wclient.get_proof(&item, wsth.tree_size) {
                Ok(proof) => {
                    if !verify_inclusion(&leaf, &proof, &wsth.root_hash) {
                        fail(&mut v, CheckName::WitnessInclusion, &wid, "witnessed root proof fails", Evidence::InclusionFailed {
                            sth: wsth.clone(),
                            leaf,
                            proof,
                        });
                    }
                }
                Err(e) if e.is_not_found() => fail(
                    &mut v,
                    CheckName::WitnessInclusion,
                    &wid,
                    format!("root of {} at size {} is not in {wid}", c.log_id, c.sth.tree_size),
                    Evidence::NotWitnessed { committed: c.sth.clone(), receipt: c.witness.clone(), witness_sth: Some(wsth.clone()) },
                ),
                Err(e) => unreachable(&mut v, &wid, wclient, &e),
            }
            // (4) witnessing-log consistency from its pin.
            if let Some(adv) = self.check_consistency(&wid, pins.witnesses.get(&wid), &wsth, None, CheckName::WitnessConsistency, &mut v) {
                witness_advances.extend(adv);
            }
            if v.failures.len() == failures_before {
                v.passed.push(c.log_id.clone());
            }
        }
        v.ok = checked > 0 && v.failures.is_empty() && v.passed.len() >= self.config.quorum.max(1).min(checked);
        if checked == 0 {
            v.witness_unverified = true;
        }
        if v.ok {
            for sth in log_advances {
                pins.logs.insert(sth.log_id.clone(), sth);
            }
            for sth in witness_advances {
                pins.witnesses.insert(sth.log_id.clone(), sth);
            }
        }
        v
    }
}
