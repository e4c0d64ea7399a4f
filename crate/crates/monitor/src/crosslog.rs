use std::collections::BTreeMap;

use swt_core::crypto::PublicKey;
use swt_core::model::Canonical;
use swt_core::tlog::{EntryKind, SignedTreeRoot};

use crate::alert::{Alert, AlertEvidence, Blame, Category};
use crate::state::LocalLog;

/// A committing log as the cross-log check sees it.
pub struct Committing<'a> {
    pub log: &'a LocalLog,
    pub key: &'a PublicKey,
}

/// Result of inspecting witnessed roots.
#[derive(Debug, Default)]
pub struct CrossLogOutcome {
    pub alerts: Vec<Alert>,
    /// Leaves whose root lies beyond the local copy of its log.
    pub pending: Vec<u64>,
}

/// Recomputes each witnessed root found at `leaves` of `witness` from the
/// local copy of its committing log.
///
/// A root with a bad signature is held against the witnessing log, since a
/// committing log cannot be framed with a root it never signed.
pub fn check_cross_log(witness: &LocalLog, leaves: impl IntoIterator<Item = u64>, committing: &BTreeMap<String, Committing<'_>>) -> CrossLogOutcome {
    let mut out = CrossLogOutcome::default();
    for leaf in leaves {
        let e = witness.entry(leaf);
        if e.kind != EntryKind::WitnessedRoot {
            continue;
        }
        let Ok(sth) = SignedTreeRoot::parse(&e.payload) else { continue };
        let Some(c) = committing.get(&sth.log_id) else { continue };
        let mut ev = AlertEvidence::in_log(&witness.log_id).entry(leaf);
        ev.strs.push(sth.clone());
        if !sth.verify_signature(c.key) {
            out.alerts.push(Alert::new(
                Category::Equivocation,
                None,
                witness.log_id.clone(),
                Blame::Log,
                format!("witnessing log accepted a root for {} at size {} with an invalid signature", sth.log_id, sth.tree_size),
            )
            .with(ev));
            continue;
        }
        if let Some(alert) = compare_root(c.log, &sth, ev) {
            out.alerts.push(alert);
        } else if sth.tree_size > c.log.size() {
            out.pending.push(leaf);
        }
    }
    out
}

/// Equivocation alert when a correctly signed root disagrees with the local
/// recomputation at its size. `None` when it agrees or lies beyond the copy.
pub fn compare_root(log: &LocalLog, sth: &SignedTreeRoot, mut ev: AlertEvidence) -> Option<Alert> {
    let ours = log.tree().root_at(sth.tree_size).ok()?;
    if ours == sth.root_hash {
        return None;
    }
    if ev.strs.is_empty() {
        ev.strs.push(sth.clone());
    }
    ev.strs.extend(log.sth.clone());
    ev.digests.insert("recomputed".into(), ours);
    Some(Alert::new(
        Category::Equivocation,
        None,
        log.log_id.clone(),
        Blame::Log,
        format!("signed root at size {} differs from the root recomputed from the log's own entries", sth.tree_size),
    )
    .with(ev))
}
