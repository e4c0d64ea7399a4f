//! Failure evidence that stands on its own: given only public keys, anyone
//! can confirm the failure from these bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use swt_core::api::{b64_decode, b64_encode};
use swt_core::crypto::PublicKey;
use swt_core::merkle::{verify_consistency, verify_inclusion, ConsistencyProof, InclusionProof};
use swt_core::model::{Canonical, Millis, ReleaseFile};
use swt_core::tlog::{InclusionPromise, SignedTreeRoot, WitnessReceipt};
use swt_core::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Promise,
    Inclusion,
    Consistency,
    ReleaseSignature,
    Validity,
    WitnessReceipt,
    WitnessInclusion,
    WitnessConsistency,
    Reachability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    /// A validly signed promise for bytes other than the release.
    PromiseMismatch { promise: InclusionPromise, release_b64: String },
    BadPromiseSignature { promise: InclusionPromise },
    BadTreeRootSignature { sth: SignedTreeRoot },
    InclusionFailed { sth: SignedTreeRoot, leaf: Digest, proof: InclusionProof },
    ConsistencyFailed { old: SignedTreeRoot, new: SignedTreeRoot, proof: ConsistencyProof },
    /// Two signed roots of one log for the same size that disagree.
    SplitView { first: SignedTreeRoot, second: SignedTreeRoot },
    BadReleaseSignature { release_b64: String },
    Expired { release_b64: String, now: Millis, skew: Millis },
    /// The committed root is absent from the witnessing log. The receipt,
    /// if any, shows the witness promised to include it.
    NotWitnessed { committed: SignedTreeRoot, receipt: Option<WitnessReceipt>, witness_sth: Option<SignedTreeRoot> },
    /// Not cryptographic: an endpoint failed to answer.
    Unreachable { endpoint: String, message: String },
}

/// Public keys needed to recheck evidence.
#[derive(Debug, Clone)]
pub struct EvidenceKeys {
    pub archive: PublicKey,
    pub logs: BTreeMap<String, PublicKey>,
}

impl EvidenceKeys {
    fn sth_ok(&self, sth: &SignedTreeRoot) -> Result<(), String> {
        let key = self.logs.get(&sth.log_id).ok_or_else(|| format!("unknown log {}", sth.log_id))?;
        if sth.verify_signature(key) {
            Ok(())
        } else {
            Err(format!("tree root of {} is not signed by it", sth.log_id))
        }
    }
}

fn release(b64: &str) -> Result<(Vec<u8>, ReleaseFile), String> {
    let bytes = b64_decode(b64).map_err(|e| e.to_string())?;
    let parsed = ReleaseFile::parse(&bytes).map_err(|e| e.to_string())?;
    Ok((bytes, parsed))
}

pub(crate) fn release_b64(bytes: &[u8]) -> String {
    b64_encode(bytes)
}

fn demonstrate(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(format!("evidence does not show {what}"))
    }
}

impl Evidence {
    /// Confirms the failure from the evidence alone. `Err` explains why
    /// the evidence does not stand up.
    pub fn recheck(&self, keys: &EvidenceKeys) -> Result<(), String> {
        match self {
            Evidence::PromiseMismatch { promise, release_b64 } => {
                let key = keys.logs.get(&promise.log_id).ok_or("unknown log")?;
                let (bytes, _) = release(release_b64)?;
                demonstrate(promise.verify_signature(key), "a signed promise")?;
                demonstrate(promise.item_digest != Digest::of(&bytes), "a digest mismatch")
            }
            Evidence::BadPromiseSignature { promise } => {
                let key = keys.logs.get(&promise.log_id).ok_or("unknown log")?;
                demonstrate(!promise.verify_signature(key), "a bad promise signature")
            }
            Evidence::BadTreeRootSignature { sth } => {
                let key = keys.logs.get(&sth.log_id).ok_or("unknown log")?;
                demonstrate(!sth.verify_signature(key), "a bad tree root signature")
            }
            Evidence::InclusionFailed { sth, leaf, proof } => {
                keys.sth_ok(sth)?;
                demonstrate(proof.tree_size != sth.tree_size || !verify_inclusion(leaf, proof, &sth.root_hash), "a failing proof")
            }
            Evidence::ConsistencyFailed { old, new, proof } => {
                keys.sth_ok(old)?;
                keys.sth_ok(new)?;
                demonstrate(old.log_id == new.log_id, "roots of one log")?;
                let matches_sizes = proof.old_size == old.tree_size && proof.new_size == new.tree_size;
                demonstrate(!matches_sizes || !verify_consistency(&old.root_hash, &new.root_hash, proof), "a failing proof")
            }
            Evidence::SplitView { first, second } => {
                keys.sth_ok(first)?;
                keys.sth_ok(second)?;
                demonstrate(
                    first.log_id == second.log_id && first.tree_size == second.tree_size && first.root_hash != second.root_hash,
                    "two roots for one size",
                )
            }
            Evidence::BadReleaseSignature { release_b64 } => {
                let (_, r) = release(release_b64)?;
                demonstrate(!r.verify_signature(&keys.archive), "a bad release signature")
            }
            Evidence::Expired { release_b64, now, skew } => {
                let (_, r) = release(release_b64)?;
                demonstrate(r.verify_signature(&keys.archive), "an archive-signed release")?;
                demonstrate(!r.is_valid_at(*now, *skew), "an expired release")
            }
            Evidence::NotWitnessed { committed, receipt, witness_sth } => {
                keys.sth_ok(committed)?;
                let receipt = receipt.as_ref().ok_or("absence alone is not provable without a receipt")?;
                let witness_key = keys.logs.get(&receipt.promise.log_id).ok_or("unknown witness")?;
                demonstrate(&receipt.committed == committed && receipt.verify(witness_key), "a witness promise for this root")?;
                let wsth = witness_sth.as_ref().ok_or("no witness tree root")?;
                keys.sth_ok(wsth)?;
                demonstrate(wsth.timestamp >= receipt.promise.timestamp, "a witness root issued after the promise")
            }
            Evidence::Unreachable { .. } => Err("infrastructure failure, not cryptographic".into()),
        }
    }
}
