//! The release examination checks. Each is a pure function of a release
//! view and the monitor's state, so any subset can run in any order.

use std::collections::{BTreeMap, BTreeSet};

use swt_core::build::BuilderOracle;
use swt_core::model::{meta_changed, AclFailure, Canonical, KeyList, Millis, PackageId, PackageRecord, SourcePackage};
use swt_core::policy::IntervalPolicy;
use swt_core::tlog::EntryKind;
use swt_core::version::compare_versions;
use swt_core::Digest;

use crate::alert::{Alert, AlertEvidence, Blame, Category};
use crate::state::{record_key, LocalLog, PackageState, SourceChange, TimelineEntry};
use crate::view::ReleaseView;

fn changed<'a>(state: &'a PackageState, r: &PackageRecord) -> (bool, Option<&'a PackageRecord>) {
    match state.previous(r) {
        // Same name and architecture by construction of the key.
        Some(old) => (meta_changed(old, r).unwrap_or(true), Some(old)),
        None => (true, None),
    }
}

/// Every index and every source record of the release is logged before
/// the release itself.
pub fn check_completeness(view: &ReleaseView, log: &LocalLog) -> Vec<Alert> {
    let id = Some(view.release_id());
    let mut alerts = Vec::new();
    if view.release_leaf.is_none() {
        alerts.push(
            Alert::new(Category::MissingIndex, id, "Release", Blame::Archive, "release file is not in the log")
                .with(AlertEvidence::in_log(&log.log_id).digest("claimed", view.release_digest)),
        );
    }
    for slot in &view.indices {
        let r = &slot.index_ref;
        if log.find(EntryKind::IndexFile, &r.sha256, view.bound).is_some() {
            continue;
        }
        let mut ev = AlertEvidence::in_log(&log.log_id).digest("claimed", r.sha256);
        if let Some((leaf, logged)) = log.latest_index(r.kind, &r.architecture, view.bound) {
            ev = ev.digest("logged", logged).entry(leaf);
        }
        alerts.push(Alert::new(Category::MissingIndex, id, slot.label(), Blame::Archive, "index referenced by the release is not logged under that digest").with(ev));
    }
    if log.find(EntryKind::Buildinfo, &view.release.buildinfo_ref, view.bound).is_none() {
        alerts.push(
            Alert::new(Category::MissingIndex, id, "Buildinfo", Blame::Archive, "buildinfo referenced by the release is not logged")
                .with(AlertEvidence::in_log(&log.log_id).digest("claimed", view.release.buildinfo_ref)),
        );
    }
    if let Some(sources) = view.sources() {
        for r in &sources.records {
            if log.find(EntryKind::SourcePackage, &r.sha256, view.bound).is_some() {
                continue;
            }
            let mut ev = AlertEvidence::in_log(&log.log_id).digest("claimed", r.sha256).record(r);
            if let Some(leaf) = log.source_entry(&r.id()).filter(|&i| i < view.bound) {
                ev = ev.digest("logged", log.entry(leaf).payload_digest).entry(leaf);
            }
            alerts.push(Alert::new(Category::MissingSource, id, format!("{}/source", r.name), Blame::Archive, format!("source {} is not logged", r.id())).with(ev));
        }
    }
    alerts
}

/// Every binary names a source present in the same release. A binary
/// missing its source on several architectures counts once per architecture.
pub fn check_source_available(view: &ReleaseView) -> Vec<Alert> {
    let Some(sources) = view.sources() else { return Vec::new() };
    let available: BTreeSet<PackageId> = sources.records.iter().map(|r| r.id()).collect();
    let mut alerts = Vec::new();
    for index in view.packages() {
        for r in &index.records {
            let ok = r.source_ref.as_ref().is_some_and(|s| available.contains(s));
            if !ok {
                let wanted = r.source_ref.as_ref().map(|s| s.to_string()).unwrap_or_else(|| "none".into());
                alerts.push(
                    Alert::new(Category::SourceUnavailable, Some(view.release_id()), record_key(r), Blame::Archive, format!("source {wanted} is not in the release's Sources"))
                        .with(AlertEvidence::in_log(&view.log_id).record(r)),
                );
            }
        }
    }
    alerts
}

/// Changed records must carry a greater version, and a binary may only
/// change when its source or its build environment did.
pub fn check_version_consistency(view: &ReleaseView, state: &PackageState) -> Vec<Alert> {
    let id = Some(view.release_id());
    let mut alerts = Vec::new();
    let sources: BTreeMap<&str, &PackageRecord> = view.sources().map(|s| s.records.iter().map(|r| (r.name.as_str(), r)).collect()).unwrap_or_default();
    for index in view.packages() {
        for r in &index.records {
            let (is_changed, old) = changed(state, r);
            let Some(old) = old.filter(|_| is_changed) else { continue };
            if compare_versions(&r.version, &old.version).is_le() {
                alerts.push(
                    Alert::new(Category::VersionNotIncremented, id, record_key(r), Blame::Archive, format!("binary changed but version went {} -> {}", old.version, r.version))
                        .with(AlertEvidence::in_log(&view.log_id).record(old).record(r)),
                );
            }
            let source_name = r.source_ref.as_ref().map(|s| s.name.as_str()).unwrap_or(&r.name);
            let source_changed = match sources.get(source_name) {
                Some(src) => changed(state, src).0,
                // Not in this release: nothing to compare, the source availability check reports it.
                None => true,
            };
            let key = record_key(r);
            let env_now = view.buildinfo.as_ref().and_then(|b| b.get(&r.name, &r.architecture)).map(|b| b.environment_digest);
            let buildinfo_changed = env_now != state.environments.get(&key).copied();
            if !source_changed && !buildinfo_changed {
                let mut ev = AlertEvidence::in_log(&view.log_id).record(old).record(r);
                if let Some(env) = env_now {
                    ev = ev.digest("environment", env);
                }
                alerts.push(Alert::new(Category::MetaChangedQuietly, id, key, Blame::Archive, "binary changed while its source and build environment did not").with(ev));
            }
        }
    }
    if let Some(sources) = view.sources() {
        for r in &sources.records {
            let (is_changed, old) = changed(state, r);
            let Some(old) = old.filter(|_| is_changed) else { continue };
            if compare_versions(&r.version, &old.version).is_le() {
                alerts.push(
                    Alert::new(Category::VersionNotIncremented, id, record_key(r), Blame::Archive, format!("source changed but version went {} -> {}", old.version, r.version))
                        .with(AlertEvidence::in_log(&view.log_id).record(old).record(r)),
                );
            }
        }
    }
    alerts
}

/// Source records that changed since the previous release, with their
/// leaves and uploaders where the log has them.
pub fn changed_sources(view: &ReleaseView, state: &PackageState, log: &LocalLog) -> Vec<SourceChange> {
    let Some(sources) = view.sources() else { return Vec::new() };
    sources
        .records
        .iter()
        .filter(|r| changed(state, r).0)
        .map(|r| {
            let entry = log.find(EntryKind::SourcePackage, &r.sha256, log.size());
            let uploader = entry.filter(|&i| !log.entry(i).withdrawn).and_then(|i| SourcePackage::parse(&log.entry(i).payload).ok()).map(|s| s.uploader_key_id);
            SourceChange { package: r.id(), digest: r.sha256, uploader, entry }
        })
        .collect()
}

/// Changed sources are signed by a key the key list allowed at the time the
/// log received them, and the key list only grows.
pub fn check_maintainers(view: &ReleaseView, previous_keylist: Option<&KeyList>, state: &PackageState, log: &LocalLog) -> Vec<Alert> {
    let id = Some(view.release_id());
    let mut alerts = Vec::new();
    let Some(keylist) = &view.keylist else {
        alerts.push(Alert::new(Category::AclViolation, id, "keylist", Blame::Archive, format!("key list {} is not logged", view.release.keylist_ref)));
        return alerts;
    };
    if let Some(prev) = previous_keylist {
        let violations = prev.successor_violations(keylist);
        if prev != keylist && !violations.is_empty() {
            let detail = serde_json::to_string(&violations).unwrap_or_default();
            alerts.push(Alert::new(Category::AclViolation, id, "keylist", Blame::Archive, format!("key list {} does not extend {}: {detail}", keylist.id(), prev.id())));
        }
    }
    for change in changed_sources(view, state, log) {
        let Some(leaf) = change.entry.filter(|&i| i < view.bound) else { continue };
        let entry = log.entry(leaf);
        if entry.withdrawn {
            continue;
        }
        let subject = format!("{}/source", change.package.name);
        let mut ev = AlertEvidence::in_log(&log.log_id).digest("source", change.digest).entry(leaf);
        let Ok(src) = SourcePackage::parse(&entry.payload) else {
            alerts.push(Alert::new(Category::BadMaintainerSig, id, subject, Blame::Archive, "logged source does not parse").with(ev));
            continue;
        };
        ev.keys.push(src.uploader_key_id);
        match keylist.authorize(&src.uploader_key_id, &src.name, entry.submitted_at) {
            Ok(k) if src.verify_signature(&k.public_key) => {}
            Ok(_) => alerts.push(Alert::new(Category::BadMaintainerSig, id, subject, Blame::Archive, "signature does not verify under the listed key").with(ev)),
            Err(e @ AclFailure::Expired { .. }) => {
                alerts.push(Alert::new(Category::BadMaintainerSig, id, subject, Blame::Archive, format!("{e} (logged at {})", entry.submitted_at)).with(ev))
            }
            Err(e) => alerts.push(Alert::new(Category::AclViolation, id, subject, Blame::Archive, e.to_string()).with(ev)),
        }
    }
    alerts
}

/// Rebuilds each changed binary from its logged source and recorded build
/// environment. Returns the alerts and the number of rebuilds.
pub fn check_reproducible(view: &ReleaseView, state: &PackageState, log: &LocalLog, builder: &dyn BuilderOracle) -> (Vec<Alert>, usize) {
    let id = Some(view.release_id());
    let mut alerts = Vec::new();
    let mut rebuilt = 0;
    for index in view.packages() {
        for r in &index.records {
            if !changed(state, r).0 {
                continue;
            }
            let key = record_key(r);
            let Some(source_ref) = &r.source_ref else { continue };
            // Never logged: reported by the completeness check.
            let Some(leaf) = log.source_entry(source_ref) else { continue };
            let entry = log.entry(leaf);
            if entry.withdrawn {
                alerts.push(
                    Alert::new(Category::SourceUnavailable, id, key, Blame::Archive, format!("source {source_ref} was withdrawn; binary cannot be rebuilt"))
                        .with(AlertEvidence::in_log(&log.log_id).entry(leaf).record(r)),
                );
                continue;
            }
            let Ok(src) = SourcePackage::parse(&entry.payload) else { continue };
            let Some(info) = view.buildinfo.as_ref().and_then(|b| b.get(&r.name, &r.architecture)) else {
                alerts.push(
                    Alert::new(Category::NotReproducible, id, key, Blame::Archive, "no buildinfo record for this binary")
                        .with(AlertEvidence::in_log(&log.log_id).entry(leaf).record(r)),
                );
                continue;
            };
            rebuilt += 1;
            let output = Digest::of(&builder.build(&src.payload, &info.environment_digest, &r.architecture));
            if output != r.sha256 {
                let ev = AlertEvidence::in_log(&log.log_id)
                    .entry(leaf)
                    .record(r)
                    .digest("published", r.sha256)
                    .digest("rebuilt", output)
                    .digest("environment", info.environment_digest);
                alerts.push(Alert::new(Category::NotReproducible, id, key, Blame::Archive, "rebuild from logged source differs from the published binary").with(ev));
            }
        }
    }
    (alerts, rebuilt)
}

/// Release cadence: too-short gaps hint at targeted off-schedule releases,
/// silence past the threshold hints at a freeze.
///
/// `silence_ms` counts from the last issue time; without it the last
/// release's validity end is the threshold.
pub fn check_frequency(timeline: &BTreeMap<u64, TimelineEntry>, policy: &IntervalPolicy, now: Millis, silence_ms: Option<Millis>) -> Vec<Alert> {
    let mut alerts = Vec::new();
    let min_gap = policy.min_gap();
    for ((_, prev), (&id, cur)) in timeline.iter().zip(timeline.iter().skip(1)) {
        let gap = cur.issued_at.saturating_sub(prev.issued_at);
        if gap < min_gap {
            let mut ev = AlertEvidence::in_log(&cur.log_id);
            for c in &cur.changed_sources {
                ev.digests.insert(c.package.to_string(), c.digest);
                ev.entries.extend(c.entry);
                ev.keys.extend(c.uploader);
            }
            let names: Vec<String> = cur.changed_sources.iter().map(|c| c.package.to_string()).collect();
            alerts.push(
                Alert::new(
                    Category::IrregularInterval,
                    Some(id),
                    "archive",
                    Blame::Archive,
                    format!("issued {gap} ms after its predecessor (minimum {min_gap}); changed sources: [{}]", names.join(", ")),
                )
                .with(ev),
            );
        }
    }
    if let Some((&id, last)) = timeline.iter().next_back() {
        let deadline = silence_ms.map(|s| last.issued_at + s).unwrap_or(last.valid_until);
        if now > deadline {
            alerts.push(Alert::new(Category::ReleaseGap, Some(id), "archive", Blame::Archive, format!("no release since {} (deadline {deadline}, now {now})", last.issued_at)));
        }
    }
    alerts
}
