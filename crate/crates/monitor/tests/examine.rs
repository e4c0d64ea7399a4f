use std::collections::BTreeSet;
use std::sync::Arc;

use swt_archive::{Archive, ArchiveOptions, CutOptions, Injection, LogTarget, PublishedRelease, KEYLIST_PACKAGE};
use swt_core::bundle::Publication;
use swt_core::clock::ManualClock;
use swt_core::crypto::SigningKey;
use swt_core::model::{Canonical, KeyEntry, KeyList, KeyScope, SourcePackage};
use swt_core::policy::HOUR_MS;
use swt_core::tlog::{EntryKind, SignedTreeRoot};
use swt_core::version::VersionString;
use swt_core::Digest;
use swt_logserver::{Log, LogSettings, Role, RunningServer};
use swt_monitor::{checks, Alert, Blame, Category, Monitor, MonitorConfig, MonitorState, ReleaseView};

const TOKEN: &str = "t";
const T0: u64 = 1_700_000_000_000;
const DAY: u64 = 24 * HOUR_MS;

struct World {
    archive_key: SigningKey,
    maintainer: SigningKey,
    scoped: SigningKey,
    expired: SigningKey,
    clock: Arc<ManualClock>,
    committing: RunningServer,
    witness: RunningServer,
    archive: Archive,
    now: u64,
    publish: tempfile::TempDir,
}

fn settings(id: &str, role: Role, archive_key: &SigningKey) -> LogSettings {
    let mut s = LogSettings::new(id, SigningKey::from_seed(id.as_bytes()), role);
    s.tokens = vec![TOKEN.into()];
    s.archive_key = Some(archive_key.public_key());
    s
}

fn world_with(lax_witness: bool) -> World {
    let archive_key = SigningKey::from_seed(b"archive");
    let maintainer = SigningKey::from_seed(b"maintainer");
    let scoped = SigningKey::from_seed(b"scoped");
    let expired = SigningKey::from_seed(b"expired");
    let clock = Arc::new(ManualClock::new(T0));
    let mut w = settings("log-b", Role::Witnessing, &archive_key);
    w.trusted_logs.insert("log-a".into(), SigningKey::from_seed(b"log-a").public_key());
    w.verify_witnessed_roots = !lax_witness;
    let witness = RunningServer::start(Log::in_memory(w, clock.clone()), "127.0.0.1:0", 2).unwrap();
    let mut a = settings("log-a", Role::Committing, &archive_key);
    a.witness_url = Some(witness.url().into());
    let committing = RunningServer::start(Log::in_memory(a, clock.clone()), "127.0.0.1:0", 2).unwrap();
    let keylist = KeyList {
        name: KEYLIST_PACKAGE.into(),
        version: VersionString::parse("1").unwrap(),
        entries: vec![
            KeyEntry::new(maintainer.public_key(), KeyScope::All, 0, u64::MAX),
            KeyEntry::new(scoped.public_key(), KeyScope::Packages(BTreeSet::from(["own".to_string()])), 0, u64::MAX),
            KeyEntry::new(expired.public_key(), KeyScope::All, 0, T0 + HOUR_MS),
        ],
    };
    let publish = tempfile::tempdir().unwrap();
    let archive = Archive::new(
        archive_key.clone(),
        SigningKey::from_seed(b"builder"),
        keylist,
        vec![LogTarget::new("log-a", committing.url(), committing.log().public_key())],
        ArchiveOptions {
            token: TOKEN.into(),
            architectures: vec!["amd64".into(), "arm64".into()],
            publish_dir: Some(publish.path().to_path_buf()),
            ..ArchiveOptions::default()
        },
    );
    World { archive_key, maintainer, scoped, expired, clock, committing, witness, archive, now: T0, publish }
}

fn world() -> World {
    world_with(false)
}

impl World {
    fn upload_with(&self, key: &SigningKey, name: &str, version: &str, force: bool) {
        let payload = format!("Depends: libc\n{name} {version}\n").into_bytes();
        let pkg = SourcePackage::new_signed(name, VersionString::parse(version).unwrap(), payload, key);
        let item = self.archive.accept_upload(pkg, self.now, force);
        assert!(item.verdict.is_accepted(), "{item:?}");
    }

    fn upload(&self, name: &str, version: &str) {
        self.upload_with(&self.maintainer, name, version, false);
    }

    fn cut_with(&mut self, opts: CutOptions) -> PublishedRelease {
        self.clock.set(self.now);
        let r = self.archive.cut_release(self.now, &opts).unwrap();
        self.now += 8 * HOUR_MS;
        r
    }

    fn cut(&mut self) -> PublishedRelease {
        self.cut_with(CutOptions::default())
    }

    fn cut_injecting(&mut self, injections: &[&str]) -> PublishedRelease {
        let injections = injections.iter().map(|s| s.parse::<Injection>().unwrap()).collect();
        self.cut_with(CutOptions { injections, ..CutOptions::default() })
    }

    fn config(&self) -> MonitorConfig {
        MonitorConfig::new(self.archive_key.public_key())
            .follow("log-a", self.committing.url(), self.committing.log().public_key())
            .follow("log-b", self.witness.url(), self.witness.log().public_key())
    }

    /// A release with a few packages on top of which tests inject.
    fn baseline(&mut self) {
        for name in ["alpha", "beta", "gamma"] {
            self.upload(name, "1.0");
        }
        self.cut();
    }
}

fn of(alerts: &[Alert], c: Category) -> Vec<&Alert> {
    alerts.iter().filter(|a| a.category == c).collect()
}

fn subjects(alerts: &[Alert]) -> Vec<(Category, String)> {
    let mut v: Vec<_> = alerts.iter().map(|a| (a.category, a.subject.clone())).collect();
    v.sort();
    v
}

#[test]
fn honest_history_raises_nothing() {
    let mut w = world();
    w.baseline();
    w.upload("alpha", "1.1");
    w.cut();
    w.upload("beta", "2.0~rc1");
    w.upload("delta", "0.1");
    w.cut();
    w.cut();
    w.upload("beta", "2.0");
    let last = w.cut();
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert!(alerts.is_empty(), "{alerts:#?}");
    let local = m.local("log-a").unwrap();
    let sth = w.committing.log().latest_sth().unwrap();
    assert_eq!(local.tree().root(), sth.root_hash);
    assert_eq!(local.sth.as_ref(), Some(&sth));
    assert_eq!(m.state().timeline.len(), 5);
    assert_eq!(m.state().releases[&4], Digest::of(&last.release_bytes));
    // 3 + 1 + 2 + 0 + 1 changed sources, two architectures each.
    assert_eq!(m.rebuilds(), 14);
    // Nothing new: a no-op.
    assert!(m.run_cycle(w.now).is_empty());
    assert_eq!(m.rebuilds(), 14);
}

#[test]
fn clean_upgrade_after_hidden_version_pair() {
    let mut w = world();
    w.upload("victim", "1.2.0");
    w.cut();
    w.upload("victim", "1.2.1");
    w.cut();
    w.upload("victim", "1.3.0");
    w.cut();
    let mut m = Monitor::new(w.config());
    assert!(m.run_cycle(w.now).is_empty());
}

#[test]
fn rewritten_leaf_is_caught_once() {
    let mut w = world();
    w.baseline();
    let mut m = Monitor::new(w.config());
    assert!(m.run_cycle(w.now).is_empty());
    let old = m.local("log-a").unwrap().sth.clone().unwrap();
    w.upload("alpha", "1.1");
    w.cut();
    let new = w.committing.log().rewrite_leaf(1, b"rewritten").unwrap();
    let alerts = m.sync("log-a").unwrap();
    assert_eq!(alerts.len(), 1);
    let a = &alerts[0];
    assert_eq!((a.category, a.blamed, a.subject.as_str()), (Category::Equivocation, Blame::Log, "log-a"));
    assert_eq!(a.evidence.strs, vec![old.clone(), new]);
    assert!(!a.evidence.entries.is_empty());
    // The copy did not advance, and the same root is not reported twice.
    assert_eq!(m.local("log-a").unwrap().sth.as_ref(), Some(&old));
    assert!(m.sync("log-a").unwrap().is_empty());
}

#[test]
fn skipped_source_submission_is_one_missing_source() {
    let mut w = world();
    w.baseline();
    w.upload("beta", "1.1");
    w.upload("gamma", "1.1");
    w.cut_injecting(&["skip-source:beta"]);
    // The next release submits it, so only one release is affected.
    w.cut();
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::MissingSource, "beta/source".to_string())], "{alerts:#?}");
    assert_eq!(alerts[0].release_id, Some(1));
    assert_eq!(alerts[0].blamed, Blame::Archive);
}

#[test]
fn index_under_other_bytes_names_both_digests() {
    let mut w = world();
    w.baseline();
    let mut m = Monitor::new(w.config());
    m.run_cycle(w.now);
    let local = m.local("log-a").unwrap();
    let leaf = (0..local.size()).find(|&i| local.entry(i).kind == EntryKind::ReleaseFile).unwrap();
    let parsed = Canonical::parse(&local.entry(leaf).payload).unwrap();
    let mut view = ReleaseView::from_log(local, leaf, parsed);
    let logged = view.indices[1].index_ref.sha256;
    view.indices[1].index_ref.sha256 = Digest::of(b"other bytes");
    let alerts = checks::check_completeness(&view, local);
    assert_eq!(alerts.len(), 1);
    assert_eq!(alerts[0].category, Category::MissingIndex);
    assert_eq!(alerts[0].evidence.digests["claimed"], Digest::of(b"other bytes"));
    assert_eq!(alerts[0].evidence.digests["logged"], logged);
}

#[test]
fn dropped_source_counts_per_architecture() {
    let mut w = world();
    w.baseline();
    w.cut_injecting(&["drop-source:gamma"]);
    w.cut();
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(
        subjects(&alerts),
        vec![(Category::SourceUnavailable, "gamma/amd64".to_string()), (Category::SourceUnavailable, "gamma/arm64".to_string())],
        "{alerts:#?}"
    );
    assert!(alerts.iter().all(|a| a.release_id == Some(1)));
}

#[test]
fn source_with_wrong_version_is_unavailable() {
    let mut w = world();
    w.baseline();
    let mut m = Monitor::new(w.config());
    m.run_cycle(w.now);
    let local = m.local("log-a").unwrap();
    let leaf = (0..local.size()).find(|&i| local.entry(i).kind == EntryKind::ReleaseFile).unwrap();
    let mut view = ReleaseView::from_log(local, leaf, Canonical::parse(&local.entry(leaf).payload).unwrap());
    let slot = view.indices.iter_mut().find(|s| s.index_ref.kind == swt_core::model::IndexKind::Sources).unwrap();
    slot.index.as_mut().unwrap().records[0].version = VersionString::parse("0.9").unwrap();
    let alerts = checks::check_source_available(&view);
    assert_eq!(subjects(&alerts), vec![(Category::SourceUnavailable, "alpha/amd64".into()), (Category::SourceUnavailable, "alpha/arm64".into())]);
}

#[test]
fn rebuild_without_bump_is_one_version_alert() {
    let mut w = world();
    w.baseline();
    w.cut_injecting(&["rebuild-without-bump:alpha/amd64"]);
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::VersionNotIncremented, "alpha/amd64".to_string())], "{alerts:#?}");
    assert_eq!(alerts[0].evidence.records.len(), 2);
}

#[test]
fn forged_binary_is_quiet_change_and_not_reproducible() {
    let mut w = world();
    w.baseline();
    w.cut_injecting(&["forge-binary:beta/arm64"]);
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(
        subjects(&alerts),
        vec![
            (Category::VersionNotIncremented, "beta/arm64".to_string()),
            (Category::MetaChangedQuietly, "beta/arm64".to_string()),
            (Category::NotReproducible, "beta/arm64".to_string()),
        ],
        "{alerts:#?}"
    );
    let nr = of(&alerts, Category::NotReproducible)[0];
    assert_eq!(nr.blamed, Blame::Archive);
    assert_ne!(nr.evidence.digests["rebuilt"], nr.evidence.digests["published"]);
    // Only the one changed binary was rebuilt in that release.
    assert_eq!(m.rebuilds(), 6 + 1);
}

#[test]
fn forged_binary_alongside_source_change() {
    let mut w = world();
    w.baseline();
    w.upload("beta", "1.1");
    w.cut_injecting(&["forge-binary:beta/amd64"]);
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::NotReproducible, "beta/amd64".to_string())], "{alerts:#?}");
}

#[test]
fn maintainer_acl() {
    let mut w = world();
    w.baseline();
    w.upload_with(&w.scoped, "own", "1.0", false);
    w.cut();
    let mut m = Monitor::new(w.config());
    assert!(m.run_cycle(w.now).is_empty());

    w.upload_with(&w.scoped, "alpha", "1.1", true);
    w.cut();
    w.now = T0 + 2 * DAY;
    w.upload_with(&w.expired, "beta", "1.1", true);
    w.cut();
    let alerts = m.run_cycle(w.now);
    assert_eq!(
        subjects(&alerts),
        vec![(Category::BadMaintainerSig, "beta/source".to_string()), (Category::AclViolation, "alpha/source".to_string())],
        "{alerts:#?}"
    );
    let acl = of(&alerts, Category::AclViolation)[0];
    assert_eq!(acl.evidence.keys, vec![w.scoped.key_id()]);
    assert!(alerts.iter().all(|a| a.blamed == Blame::Archive));
}

#[test]
fn shrinking_key_list_is_flagged() {
    let mut w = world();
    w.baseline();
    let mut newer = w.archive.keylist();
    newer.version = VersionString::parse("2").unwrap();
    newer.entries.pop();
    w.archive.update_keylist(newer, true).unwrap();
    w.cut();
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::AclViolation, "keylist".to_string())]);
}

#[test]
fn withdrawn_source_leaves_binary_unverifiable() {
    let mut w = world();
    w.baseline();
    w.archive.remove_source("gamma", &VersionString::parse("1.0").unwrap(), "legal", w.now).unwrap();
    w.cut();
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::SourceUnavailable, "gamma/amd64".into()), (Category::SourceUnavailable, "gamma/arm64".into())]);
    assert!(alerts[0].detail.contains("withdrawn"));
}

#[test]
fn release_cadence() {
    let mut w = world();
    w.baseline();
    w.cut();
    let mut m = Monitor::new(w.config());
    assert!(m.run_cycle(w.now).is_empty());

    // An off-schedule release one minute after the last regular one.
    w.now -= 8 * HOUR_MS - 60_000;
    w.upload("beta", "1.0.1");
    w.cut_with(CutOptions { bypass_interval: true, ..Default::default() });
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::IrregularInterval, "archive".to_string())]);
    let ev = &alerts[0].evidence;
    assert_eq!(ev.keys, vec![w.maintainer.key_id()]);
    assert_eq!(ev.entries.len(), 1);
    let leaf = m.local("log-a").unwrap().entry(ev.entries[0]);
    let src: SourcePackage = Canonical::parse(&leaf.payload).unwrap();
    assert_eq!(src.version.to_string(), "1.0.1");
    assert!(src.verify_signature(&w.maintainer.public_key()));
    // Reported once.
    assert!(m.run_cycle(w.now).is_empty());

    let frozen = w.now + 15 * DAY;
    let alerts = m.run_cycle(frozen);
    assert_eq!(subjects(&alerts), vec![(Category::ReleaseGap, "archive".to_string())]);
}

#[test]
fn fork_witnessed_in_second_log_is_equivocation() {
    let mut w = world();
    w.baseline();
    let mut m = Monitor::new(w.config());
    assert!(m.run_cycle(w.now).is_empty(), "honest pair");

    let k = w.committing.log().size();
    let fork = w.committing.log().fork(k - 1, w.clock.clone()).unwrap();
    fork.submit(EntryKind::SourcePackage, &SourcePackage::new_signed("evil", VersionString::parse("1").unwrap(), b"x".to_vec(), &w.maintainer).canonical_bytes(), TOKEN).unwrap();
    let forked = fork.issue_str().unwrap();
    assert_eq!(forked.tree_size, k);

    assert_eq!(m.check_presented_root(&forked).unwrap().unwrap().category, Category::Equivocation);

    swt_core::client::LogClient::new(w.witness.url()).add_witnessed_root(&forked).unwrap();
    w.witness.log().issue_str().unwrap();
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::Equivocation, "log-a".to_string())], "{alerts:#?}");
    assert_eq!(alerts[0].evidence.strs[0], forked);
    assert_eq!(alerts[0].evidence.log_id.as_deref(), Some("log-b"));
    assert!(m.run_cycle(w.now).is_empty());
}

#[test]
fn witnessed_root_with_bad_signature_blames_witness() {
    let mut w = world_with(true);
    w.baseline();
    let real = w.committing.log().latest_sth().unwrap();
    let bogus = SignedTreeRoot::new_signed("log-a", real.tree_size, Digest::of(b"bogus"), real.timestamp, &SigningKey::from_seed(b"intruder"));
    swt_core::client::LogClient::new(w.witness.url()).add_witnessed_root(&bogus).unwrap();
    w.witness.log().issue_str().unwrap();
    let mut m = Monitor::new(w.config());
    let alerts = m.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::Equivocation, "log-b".to_string())], "{alerts:#?}");
    assert!(m.check_presented_root(&bogus).is_err());
}

#[test]
fn version_check_is_idempotent() {
    let mut w = world();
    w.baseline();
    w.cut_injecting(&["rebuild-without-bump:gamma/arm64", "forge-binary:alpha/amd64"]);
    let mut m = Monitor::new(w.config());
    m.sync_all();
    let local = m.local("log-a").unwrap();
    let leaves: Vec<u64> = (0..local.size()).filter(|&i| local.entry(i).kind == EntryKind::ReleaseFile).collect();
    let views: Vec<ReleaseView> =
        leaves.iter().map(|&l| ReleaseView::from_log(local, l, Canonical::parse(&local.entry(l).payload).unwrap())).collect();
    let mut state = swt_monitor::PackageState::default();
    state.apply(&views[0]);
    let first = checks::check_version_consistency(&views[1], &state);
    assert_eq!(first, checks::check_version_consistency(&views[1], &state));
    assert_eq!(first.len(), 3);
}

#[test]
fn publication_replay_matches_log_mode() {
    let mut w = world();
    w.baseline();
    w.upload("beta", "1.1");
    w.cut_injecting(&["skip-source:beta", "drop-source:alpha"]);
    w.cut_injecting(&["forge-binary:gamma/amd64"]);
    let mut live = Monitor::new(w.config());
    let mut from_log = live.run_cycle(w.now);
    let mut replay = Monitor::new(w.config());
    replay.sync_all();
    let publications = Publication::load_all(w.publish.path()).unwrap();
    assert_eq!(publications.len(), 3);
    let mut from_disk = replay.replay_publications(&publications);
    from_disk.extend(replay.check_frequency(w.now));
    from_disk.extend(replay.check_cross_log());
    from_log.sort_by_key(|a| (a.category, a.subject.clone()));
    from_disk.sort_by_key(|a| (a.category, a.subject.clone()));
    assert_eq!(subjects(&from_log), subjects(&from_disk));
    assert_eq!(from_log.len(), 1 + 2 + 3);
}

#[test]
fn state_survives_save_and_load() {
    let mut w = world();
    w.baseline();
    let mut m = Monitor::new(w.config());
    m.run_cycle(w.now);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    m.state().save(&path).unwrap();
    w.cut_injecting(&["rebuild-without-bump:alpha/amd64"]);
    let mut restored = Monitor::with_state(w.config(), MonitorState::load(&path).unwrap());
    assert_eq!(restored.local("log-a").unwrap().tree().root(), m.local("log-a").unwrap().tree().root());
    let alerts = restored.run_cycle(w.now);
    assert_eq!(subjects(&alerts), vec![(Category::VersionNotIncremented, "alpha/amd64".to_string())]);
}

#[test]
fn alerts_reach_the_sink() {
    let mut w = world();
    w.baseline();
    w.cut_injecting(&["drop-source:beta"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alerts.jsonl");
    let mut m = Monitor::new(w.config()).with_sink(swt_monitor::AlertSink::json_lines(&path));
    let alerts = m.run_cycle(w.now);
    assert_eq!(swt_monitor::read_alerts(&path).unwrap(), alerts);
}
