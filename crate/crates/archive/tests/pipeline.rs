use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use swt_archive::{Archive, ArchiveError, ArchiveOptions, CutOptions, Injection, LogTarget, RejectReason, Verdict, KEYLIST_PACKAGE};
use swt_core::build::{environment_digest, BuilderOracle, HashBuilder};
use swt_core::bundle::{index_file_name, Publication, BUILDINFO_FILE};
use swt_core::clock::ManualClock;
use swt_core::crypto::SigningKey;
use swt_core::merkle::{verify_consistency, verify_inclusion};
use swt_core::model::{
    BuildinfoBundle, Canonical, IndexKind, KeyEntry, KeyList, KeyScope, PackageIndex, SourcePackage, VALIDITY_WINDOW_MS,
};
use swt_core::policy::HOUR_MS;
use swt_core::tlog::EntryKind;
use swt_core::version::VersionString;
use swt_core::Digest;
use swt_logserver::{Log, LogSettings, Role, RunningServer};

const TOKEN: &str = "t";
const T0: u64 = 1_700_000_000_000;
const FAR: u64 = T0 + 1000 * 24 * HOUR_MS;

struct Keys {
    archive: SigningKey,
    full: SigningKey,
    scoped: SigningKey,
    expired: SigningKey,
}

fn keys() -> Keys {
    Keys {
        archive: SigningKey::from_seed(b"archive"),
        full: SigningKey::from_seed(b"full member"),
        scoped: SigningKey::from_seed(b"scoped"),
        expired: SigningKey::from_seed(b"expired"),
    }
}

fn keylist(k: &Keys) -> KeyList {
    KeyList {
        name: KEYLIST_PACKAGE.into(),
        version: v("1"),
        entries: vec![
            KeyEntry::new(k.full.public_key(), KeyScope::All, 0, FAR),
            KeyEntry::new(k.scoped.public_key(), KeyScope::Packages(["libfoo".to_string()].into()), 0, FAR),
            KeyEntry::new(k.expired.public_key(), KeyScope::All, 0, T0 - 1),
        ],
    }
}

fn v(s: &str) -> VersionString {
    VersionString::parse(s).unwrap()
}

fn src(name: &str, version: &str, key: &SigningKey) -> SourcePackage {
    let body = format!("Depends: libc\n{name} {version} source body").into_bytes();
    SourcePackage::new_signed(name, v(version), body, key)
}

fn start_log(id: &str, archive: &SigningKey) -> RunningServer {
    let mut s = LogSettings::new(id, SigningKey::from_seed(id.as_bytes()), Role::Committing);
    s.tokens = vec![TOKEN.into()];
    s.archive_key = Some(archive.public_key());
    RunningServer::start(Log::in_memory(s, Arc::new(ManualClock::new(T0))), "127.0.0.1:0", 2).unwrap()
}

fn target(server: &RunningServer) -> LogTarget {
    LogTarget::new(server.log().log_id(), server.url(), server.log().public_key())
}

fn options(arches: &[&str]) -> ArchiveOptions {
    ArchiveOptions {
        architectures: arches.iter().map(|a| a.to_string()).collect(),
        token: TOKEN.into(),
        ..ArchiveOptions::default()
    }
}

fn archive_with(k: &Keys, logs: &[&RunningServer], opts: ArchiveOptions) -> Archive {
    Archive::new(k.archive.clone(), SigningKey::from_seed(b"builder"), keylist(k), logs.iter().map(|s| target(s)).collect(), opts)
}

#[test]
fn upload_acl() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let a = archive_with(&k, &[&log], options(&["amd64"]));
    assert_eq!(a.accept_upload(src("anything", "1", &k.full), T0, false).verdict, Verdict::Accepted);
    assert_eq!(a.accept_upload(src("libfoo", "1", &k.scoped), T0, false).verdict, Verdict::Accepted);

    let code = |item: swt_archive::UploadQueueItem| match item.verdict {
        Verdict::Rejected { reason } => reason.code(),
        other => panic!("{other:?}"),
    };
    assert_eq!(code(a.accept_upload(src("other", "1", &k.scoped), T0, false)), "scope");
    assert_eq!(code(a.accept_upload(src("other", "1", &k.expired), T0, false)), "expired");
    assert_eq!(code(a.accept_upload(src("other", "1", &SigningKey::from_seed(b"stranger")), T0, false)), "unknown_key");
    let mut forged = src("other", "1", &k.full);
    forged.payload.push(b'!');
    assert_eq!(code(a.accept_upload(forged, T0, false)), "bad_signature");

    let forced = a.accept_upload(src("other", "2", &k.scoped), T0, true);
    assert!(matches!(forced.verdict, Verdict::ForceAccepted { reason: RejectReason::Acl { .. } }));
    assert_eq!(a.current_source("other").unwrap().version, v("2"));
    assert_eq!(a.uploads().len(), 7);
}

#[test]
fn first_release_leaf_count_and_idle_release() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let dir = tempfile::tempdir().unwrap();
    let a = archive_with(&k, &[&log], ArchiveOptions { publish_dir: Some(dir.path().into()), ..options(&["amd64"]) });
    for name in ["alpha", "beta", "gamma"] {
        assert!(a.accept_upload(src(name, "1.0-1", &k.full), T0, false).verdict.is_accepted());
    }
    let r0 = a.cut_release(T0, &CutOptions::default()).unwrap();
    // 3 sources, key list, buildinfo, Sources, Packages/amd64, Release.
    assert_eq!(log.log().size(), 8);
    assert_eq!(r0.bundle.items.len(), 8);
    let kinds: Vec<EntryKind> = r0.bundle.items.iter().map(|i| i.kind).collect();
    assert_eq!(&kinds[..3], &[EntryKind::SourcePackage; 3]);
    assert_eq!(&kinds[3..], &[EntryKind::KeyListPackage, EntryKind::Buildinfo, EntryKind::IndexFile, EntryKind::IndexFile, EntryKind::ReleaseFile]);
    assert_eq!(r0.release.valid_until - r0.release.issued_at, VALIDITY_WINDOW_MS);
    assert!(r0.release.verify_signature(&a.public_key()));

    let c = &r0.bundle.logs[0];
    assert_eq!(c.sth.tree_size, 8);
    let leaf = swt_core::tlog::entry_leaf_hash(EntryKind::ReleaseFile, &r0.release_bytes);
    assert!(verify_inclusion(&leaf, &c.release_proof, &c.sth.root_hash));
    for (item, promise) in r0.bundle.items.iter().zip(&c.promises) {
        assert_eq!(item.digest, promise.item_digest);
        assert!(promise.verify_signature(&log.log().public_key()));
    }

    let pubd = Publication::load(r0.dir.as_ref().unwrap()).unwrap();
    assert_eq!(pubd.release, r0.release);
    assert_eq!(pubd.bundle, r0.bundle);
    let packages = PackageIndex::parse(&pubd.file(&index_file_name(IndexKind::Packages, "amd64")).unwrap()).unwrap();
    assert_eq!(packages.records.len(), 3);
    let alpha = packages.get("alpha").unwrap();
    assert_eq!(alpha.depends, vec!["libc"]);
    assert_eq!(alpha.source_ref.as_ref().unwrap().to_string(), "alpha 1.0-1");
    let buildinfo = BuildinfoBundle::parse(&pubd.file(BUILDINFO_FILE).unwrap()).unwrap();
    let env = buildinfo.get("alpha", "amd64").unwrap().environment_digest;
    let source = a.current_source("alpha").unwrap();
    assert_eq!(Digest::of(&HashBuilder.build(&source.payload, &env, "amd64")), alpha.sha256);

    // Nothing changed: only a new release leaf.
    let r1 = a.cut_release(T0 + 6 * HOUR_MS, &CutOptions::default()).unwrap();
    assert_eq!(log.log().size(), 9);
    assert_eq!(r0.release.index_refs, r1.release.index_refs);
    let sources = r1.bundle.items.iter().filter(|i| i.kind == EntryKind::SourcePackage).count();
    assert_eq!(sources, 0);
    assert_eq!(r1.mirror.logs[0].proofs.len(), 1);
    let p = &r1.mirror.logs[0].proofs[0];
    assert!(verify_consistency(&r0.bundle.logs[0].sth.root_hash, &r1.bundle.logs[0].sth.root_hash, p));
}

#[test]
fn interval_policy() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let a = archive_with(&k, &[&log], options(&["amd64"]));
    a.cut_release(T0, &CutOptions::default()).unwrap();
    match a.cut_release(T0 + 2 * HOUR_MS, &CutOptions::default()) {
        Err(ArchiveError::Deferred { until }) => assert_eq!(until, T0 + 6 * HOUR_MS),
        other => panic!("{other:?}"),
    }
    let bypass = CutOptions { bypass_interval: true, ..CutOptions::default() };
    let r = a.cut_release(T0 + 60_000, &bypass).unwrap();
    assert_eq!(r.release.release_id, 1);
    assert_eq!(a.last_issued_at(), Some(T0 + 60_000));
}

#[test]
fn quorum() {
    let k = keys();
    let (l1, l2, l3) = (start_log("log-1", &k.archive), start_log("log-2", &k.archive), start_log("log-3", &k.archive));
    let dir = tempfile::tempdir().unwrap();

    let both = archive_with(&k, &[&l1, &l2], ArchiveOptions { quorum: 2, publish_dir: Some(dir.path().into()), ..options(&["amd64"]) });
    both.accept_upload(src("alpha", "1", &k.full), T0, false);
    let r = both.cut_release(T0, &CutOptions::default()).unwrap();
    assert_eq!(r.bundle.logs.len(), 2);

    l2.set_available(false);
    both.accept_upload(src("alpha", "2", &k.full), T0, false);
    match both.cut_release(T0 + 6 * HOUR_MS, &CutOptions::default()) {
        Err(ArchiveError::QuorumUnmet { ok: 1, needed: 2, failures }) => assert!(failures[0].starts_with("log-2")),
        other => panic!("{other:?}"),
    }
    assert!(!dir.path().join("000001").exists());
    // Withheld release leaves the archive where it was; the upload is still pending.
    assert_eq!(both.last_issued_at(), Some(T0));
    l2.set_available(true);
    let r = both.cut_release(T0 + 7 * HOUR_MS, &CutOptions::default()).unwrap();
    assert_eq!(r.release.release_id, 1);
    assert!(r.bundle.items.iter().any(|i| i.label == "alpha 2"));

    let three = archive_with(&k, &[&l1, &l2, &l3], ArchiveOptions { quorum: 2, ..options(&["amd64"]) });
    l3.set_available(false);
    let r = three.cut_release(T0, &CutOptions::default()).unwrap();
    let ids: BTreeSet<_> = r.bundle.logs.iter().map(|c| c.log_id.as_str()).collect();
    assert_eq!(ids, BTreeSet::from(["log-1", "log-2"]));
}

#[test]
fn injections_change_what_is_published() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let dir = tempfile::tempdir().unwrap();
    let a = archive_with(&k, &[&log], ArchiveOptions { publish_dir: Some(dir.path().into()), ..options(&["amd64", "arm64"]) });
    for name in ["alpha", "beta", "gamma"] {
        a.accept_upload(src(name, "1", &k.full), T0, false);
    }
    let r0 = a.cut_release(T0, &CutOptions::default()).unwrap();
    let packages0 = |arch: &str, p: &Publication| PackageIndex::parse(&p.file(&index_file_name(IndexKind::Packages, arch)).unwrap()).unwrap();
    let p0 = Publication::load(r0.dir.as_ref().unwrap()).unwrap();

    a.accept_upload(src("gamma", "2", &k.full), T0, false);
    let opts = CutOptions {
        bypass_interval: false,
        injections: vec![
            Injection::RebuildWithoutBump { package: "alpha".into(), architecture: "arm64".into() },
            Injection::ForgeBinary { package: "beta".into(), architecture: "amd64".into() },
            Injection::DropSourceRecord { package: "beta".into() },
            Injection::SkipSourceSubmission { package: "gamma".into() },
        ],
    };
    let r1 = a.cut_release(T0 + 6 * HOUR_MS, &opts).unwrap();
    let p1 = Publication::load(r1.dir.as_ref().unwrap()).unwrap();

    let (old, new) = (packages0("arm64", &p0), packages0("arm64", &p1));
    assert_eq!(old.get("alpha").unwrap().version, new.get("alpha").unwrap().version);
    assert_ne!(old.get("alpha").unwrap().sha256, new.get("alpha").unwrap().sha256);
    assert_eq!(old.get("alpha").unwrap().source_ref, new.get("alpha").unwrap().source_ref);

    let beta = packages0("amd64", &p1).get("beta").unwrap().clone();
    let buildinfo = BuildinfoBundle::parse(&p1.file(BUILDINFO_FILE).unwrap()).unwrap();
    let env = buildinfo.get("beta", "amd64").unwrap().environment_digest;
    assert_eq!(env, environment_digest("gcc-13", "amd64", 0));
    assert_eq!(beta.version, v("1"));
    let honest = HashBuilder.build(&a.current_source("beta").unwrap().payload, &env, "amd64");
    assert_ne!(Digest::of(&honest), beta.sha256);

    let sources = PackageIndex::parse(&p1.file("Sources").unwrap()).unwrap();
    assert!(sources.get("beta").is_none());
    assert_eq!(sources.get("gamma").unwrap().version, v("2"));
    assert!(!r1.bundle.items.iter().any(|i| i.kind == EntryKind::SourcePackage));

    // The skipped source goes out with the next release.
    let r2 = a.cut_release(T0 + 12 * HOUR_MS, &CutOptions::default()).unwrap();
    let labels: Vec<_> = r2.bundle.items.iter().filter(|i| i.kind == EntryKind::SourcePackage).map(|i| i.label.as_str()).collect();
    assert_eq!(labels, vec!["gamma 2"]);
    let p2 = Publication::load(r2.dir.as_ref().unwrap()).unwrap();
    assert!(PackageIndex::parse(&p2.file("Sources").unwrap()).unwrap().get("beta").is_some());
}

struct Flaky(AtomicU64);

impl BuilderOracle for Flaky {
    fn build(&self, source: &[u8], env: &Digest, arch: &str) -> Vec<u8> {
        let mut out = HashBuilder.build(source, env, arch);
        out.extend_from_slice(&self.0.fetch_add(1, Ordering::SeqCst).to_be_bytes());
        out
    }
}

#[test]
fn nondeterministic_builder_aborts() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let a = archive_with(&k, &[&log], options(&["amd64"])).with_builder(Box::new(Flaky(AtomicU64::new(0))));
    a.accept_upload(src("alpha", "1", &k.full), T0, false);
    assert!(matches!(a.cut_release(T0, &CutOptions::default()), Err(ArchiveError::Nondeterministic { .. })));
    assert_eq!(log.log().size(), 0);
}

#[test]
fn keylist_updates_must_extend() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let a = archive_with(&k, &[&log], options(&["amd64"]));
    let mut newer = keylist(&k);
    newer.version = v("2");
    newer.entries[0].expires_at = T0 + HOUR_MS;
    a.update_keylist(newer.clone(), false).unwrap();
    let mut shrunk = newer.clone();
    shrunk.version = v("3");
    shrunk.entries.pop();
    assert!(matches!(a.update_keylist(shrunk.clone(), false), Err(ArchiveError::KeyList(_))));
    a.update_keylist(shrunk, true).unwrap();
    assert_eq!(a.keylist().entries.len(), 2);
}

#[test]
fn removal_through_archive() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let a = archive_with(&k, &[&log], options(&["amd64"]));
    a.accept_upload(src("alpha", "1", &k.full), T0, false);
    a.cut_release(T0, &CutOptions::default()).unwrap();
    let notice = a.remove_source("alpha", &v("1"), "legal", T0 + 5).unwrap();
    assert!(notice.verify_signature(&a.public_key()));
    assert!(matches!(log.log().get_source("alpha", "1").unwrap(), Err(_)));
    assert!(matches!(a.remove_source("alpha", &v("9"), "x", T0), Err(ArchiveError::UnknownSource(_))));
}

#[test]
fn state_survives_save_and_load() {
    let k = keys();
    let log = start_log("log-a", &k.archive);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let a = archive_with(&k, &[&log], options(&["amd64"]));
    a.accept_upload(src("alpha", "1", &k.full), T0, false);
    a.cut_release(T0, &CutOptions::default()).unwrap();
    a.save_state(&path).unwrap();
    let b = archive_with(&k, &[&log], options(&["amd64"]));
    b.load_state(&path).unwrap();
    assert_eq!(b.last_issued_at(), Some(T0));
    let r = b.cut_release(T0 + 6 * HOUR_MS, &CutOptions::default()).unwrap();
    assert_eq!(r.release.release_id, 1);
    assert_eq!(r.mirror.logs[0].proofs.len(), 1);
}
