//! Deterministic upload schedules and the alerts they should provoke.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swt_archive::Injection;
use swt_core::crypto::SigningKey;
use swt_core::model::{KeyEntry, KeyList, KeyScope, Millis, SourcePackage};
use swt_core::policy::HOUR_MS;
use swt_core::version::VersionString;
use swt_core::Digest;
use swt_monitor::Category;

use crate::scenario::{package_name, Scenario, ScenarioInjection, SCOPED_PACKAGE};

pub const T0: Millis = 1_700_000_000_000;
/// Regular release cadence.
pub const CADENCE_MS: Millis = 8 * HOUR_MS;
/// Delay of an off-schedule release after its regular predecessor.
pub const HIDDEN_DELAY_MS: Millis = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signer {
    Maintainer,
    /// Scoped to [`SCOPED_PACKAGE`].
    Scoped,
    /// Expired one hour after `T0`.
    Expired,
}

/// The fixed key material of a corpus.
pub struct Keys {
    pub archive: SigningKey,
    pub builder: SigningKey,
    pub maintainer: SigningKey,
    pub scoped: SigningKey,
    pub expired: SigningKey,
}

impl Keys {
    pub fn new() -> Self {
        Keys {
            archive: SigningKey::from_seed(b"harness-archive"),
            builder: SigningKey::from_seed(b"harness-builder"),
            maintainer: SigningKey::from_seed(b"harness-maintainer"),
            scoped: SigningKey::from_seed(b"harness-scoped"),
            expired: SigningKey::from_seed(b"harness-expired"),
        }
    }

    pub fn signer(&self, s: Signer) -> &SigningKey {
        match s {
            Signer::Maintainer => &self.maintainer,
            Signer::Scoped => &self.scoped,
            Signer::Expired => &self.expired,
        }
    }

    pub fn keylist(&self) -> KeyList {
        KeyList {
            name: swt_archive::KEYLIST_PACKAGE.into(),
            version: VersionString::parse("1").expect("valid version"),
            entries: vec![
                KeyEntry::new(self.maintainer.public_key(), KeyScope::All, 0, u64::MAX),
                KeyEntry::new(self.scoped.public_key(), KeyScope::Packages(BTreeSet::from([SCOPED_PACKAGE.to_string()])), 0, u64::MAX),
                KeyEntry::new(self.expired.public_key(), KeyScope::All, 0, T0 + HOUR_MS),
            ],
        }
    }
}

impl Default for Keys {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upload {
    pub package: String,
    pub version: String,
    pub signer: Signer,
    /// Accept despite an ACL failure.
    pub force: bool,
    pub payload_digest: Digest,
    #[serde(skip)]
    pub payload: Vec<u8>,
}

impl Upload {
    pub fn signed(&self, keys: &Keys) -> SourcePackage {
        let version = VersionString::parse(&self.version).expect("generated versions parse");
        SourcePackage::new_signed(self.package.clone(), version, self.payload.clone(), keys.signer(self.signer))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRelease {
    pub release_id: u64,
    /// Index among regular releases; `None` for off-schedule ones.
    pub regular: Option<u64>,
    pub at: Millis,
    pub uploads: Vec<Upload>,
    pub injections: Vec<Injection>,
    pub bypass_interval: bool,
    /// Fork the committing log before this release and serve the fork to a victim.
    pub equivocate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExpectedAlert {
    pub category: Category,
    pub release_id: Option<u64>,
    pub subject: String,
}

impl ExpectedAlert {
    fn new(category: Category, release_id: Option<u64>, subject: impl Into<String>) -> Self {
        ExpectedAlert { category, release_id, subject: subject.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub releases: Vec<PlannedRelease>,
    pub expected: Vec<ExpectedAlert>,
}

impl Corpus {
    /// SHA-256 over the corpus JSON, where payloads appear by digest.
    pub fn digest(&self) -> Digest {
        Digest::of(&serde_json::to_vec(self).expect("corpus serializes"))
    }

    pub fn last_at(&self) -> Millis {
        self.releases.last().map(|r| r.at).unwrap_or(T0)
    }

    /// Total bytes of distinct source payloads.
    pub fn unique_payload_bytes(&self) -> u64 {
        let mut seen = BTreeMap::new();
        for u in self.releases.iter().flat_map(|r| &r.uploads) {
            seen.insert(u.payload_digest, u.payload.len() as u64);
        }
        seen.values().sum()
    }
}

fn payload(rng: &mut ChaCha8Rng, s: &Scenario, name: &str, version: &str) -> Vec<u8> {
    let len = rng.gen_range(s.payload_bytes.0..=s.payload_bytes.1);
    let mut out = Vec::with_capacity(len);
    if s.packages > 1 && rng.gen_bool(0.3) {
        let dep = package_name(rng.gen_range(0..s.packages));
        if dep != name {
            out.extend_from_slice(format!("Depends: {dep}\n").as_bytes());
        }
    }
    out.extend_from_slice(format!("{name} {version}\n").as_bytes());
    let start = out.len();
    out.resize(len.max(start), 0);
    rng.fill(&mut out[start..]);
    out
}

fn default_signer(name: &str) -> Signer {
    if name == SCOPED_PACKAGE {
        Signer::Scoped
    } else {
        Signer::Maintainer
    }
}

/// Expands a validated scenario into an upload schedule plus ground truth.
pub fn generate(s: &Scenario) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let names: Vec<String> = (0..s.packages).map(package_name).collect();
    let arch0 = s.architectures[0].clone();
    let mut minor = vec![0u32; s.packages];
    let mut releases = Vec::new();
    let mut expected = Vec::new();
    let mut next_id = 0u64;
    let mut hidden_carry: BTreeSet<String> = BTreeSet::new();

    for i in 0..s.n_releases {
        let here: Vec<&ScenarioInjection> = s.injections.iter().filter(|inj| inj.release() == i).collect();
        let mut must_change: BTreeSet<String> = std::mem::take(&mut hidden_carry);
        let mut must_stay = BTreeSet::new();
        for inj in &here {
            match inj {
                ScenarioInjection::SkipSource { package, .. }
                | ScenarioInjection::OutOfScopeUpload { package, .. }
                | ScenarioInjection::ExpiredKeyUpload { package, .. } => {
                    must_change.insert(package.clone());
                }
                ScenarioInjection::RebuildWithoutBump { package, .. } => {
                    must_stay.insert(package.clone());
                }
                ScenarioInjection::DropSource { package, .. } if i > 0 => {
                    must_stay.insert(package.clone());
                }
                _ => {}
            }
        }

        let id = next_id;
        next_id += 1;
        let at = T0 + i * CADENCE_MS;
        let mut uploads = Vec::new();
        let mut changed = BTreeSet::new();
        for (p, name) in names.iter().enumerate() {
            let draw = rng.gen_bool(s.churn);
            let change = i == 0 || must_change.contains(name) || (draw && !must_stay.contains(name));
            if !change {
                continue;
            }
            if i > 0 {
                minor[p] += 1;
            }
            let version = format!("1.{}.0", minor[p]);
            let (signer, force) = here
                .iter()
                .find_map(|inj| match inj {
                    ScenarioInjection::OutOfScopeUpload { package, .. } if package == name => Some((Signer::Scoped, true)),
                    ScenarioInjection::ExpiredKeyUpload { package, .. } if package == name => Some((Signer::Expired, true)),
                    _ => None,
                })
                .unwrap_or((default_signer(name), false));
            let bytes = payload(&mut rng, s, name, &version);
            uploads.push(Upload { package: name.clone(), version, signer, force, payload_digest: Digest::of(&bytes), payload: bytes });
            changed.insert(name.clone());
        }

        let mut injections = Vec::new();
        let mut equivocate = false;
        let mut hidden = None;
        for inj in &here {
            match inj {
                ScenarioInjection::SkipSource { package, .. } => {
                    injections.push(Injection::SkipSourceSubmission { package: package.clone() });
                    expected.push(ExpectedAlert::new(Category::MissingSource, Some(id), format!("{package}/source")));
                }
                ScenarioInjection::DropSource { package, .. } => {
                    injections.push(Injection::DropSourceRecord { package: package.clone() });
                    for arch in &s.architectures {
                        expected.push(ExpectedAlert::new(Category::SourceUnavailable, Some(id), format!("{package}/{arch}")));
                    }
                }
                ScenarioInjection::ForgeBinary { package, architecture, .. } => {
                    injections.push(Injection::ForgeBinary { package: package.clone(), architecture: architecture.clone() });
                    let subject = format!("{package}/{architecture}");
                    if !changed.contains(package) {
                        expected.push(ExpectedAlert::new(Category::VersionNotIncremented, Some(id), subject.clone()));
                        expected.push(ExpectedAlert::new(Category::MetaChangedQuietly, Some(id), subject.clone()));
                    }
                    expected.push(ExpectedAlert::new(Category::NotReproducible, Some(id), subject));
                }
                ScenarioInjection::RebuildWithoutBump { package, architecture, .. } => {
                    injections.push(Injection::RebuildWithoutBump { package: package.clone(), architecture: architecture.clone() });
                    expected.push(ExpectedAlert::new(Category::VersionNotIncremented, Some(id), format!("{package}/{architecture}")));
                }
                ScenarioInjection::OutOfScopeUpload { package, .. } => {
                    expected.push(ExpectedAlert::new(Category::AclViolation, Some(id), format!("{package}/source")));
                }
                ScenarioInjection::ExpiredKeyUpload { package, .. } => {
                    expected.push(ExpectedAlert::new(Category::BadMaintainerSig, Some(id), format!("{package}/source")));
                }
                ScenarioInjection::HiddenVersion { package, forge_binary, .. } => hidden = Some((package.clone(), *forge_binary)),
                ScenarioInjection::Equivocation { .. } => {
                    equivocate = true;
                    expected.push(ExpectedAlert::new(Category::Equivocation, None, "log-a"));
                }
            }
        }
        releases.push(PlannedRelease { release_id: id, regular: Some(i), at, uploads, injections, bypass_interval: false, equivocate });

        if let Some((package, forge)) = hidden {
            let hid = next_id;
            next_id += 1;
            let p = names.iter().position(|n| *n == package).expect("validated package");
            let version = format!("1.{}.1", minor[p]);
            let bytes = payload(&mut rng, s, &package, &version);
            let upload =
                Upload { package: package.clone(), version, signer: Signer::Maintainer, force: false, payload_digest: Digest::of(&bytes), payload: bytes };
            let mut injections = Vec::new();
            expected.push(ExpectedAlert::new(Category::IrregularInterval, Some(hid), "archive"));
            if forge {
                injections.push(Injection::ForgeBinary { package: package.clone(), architecture: arch0.clone() });
                expected.push(ExpectedAlert::new(Category::NotReproducible, Some(hid), format!("{package}/{arch0}")));
            }
            releases.push(PlannedRelease {
                release_id: hid,
                regular: None,
                at: at + HIDDEN_DELAY_MS,
                uploads: vec![upload],
                injections,
                bypass_interval: true,
                equivocate: false,
            });
            hidden_carry.insert(package);
        }
    }
    expected.sort();
    Corpus { releases, expected }
}
