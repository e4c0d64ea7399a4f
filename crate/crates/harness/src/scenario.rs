use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// One committing log, no witness.
    SingleLog,
    /// Two committing logs, quorum of two.
    DualLogQuorum,
    /// Two logs that commit and witness each other's roots, quorum of two.
    CrossLogged,
}

/// A violation to realize at a regular release. `release` counts regular
/// releases from 0; off-schedule releases get their own ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioInjection {
    /// The package changes but its source is not submitted to the logs.
    SkipSource { release: u64, package: String },
    /// The package's record is left out of the Sources index.
    DropSource { release: u64, package: String },
    /// The published binary is not what the builder produced.
    ForgeBinary { release: u64, package: String, architecture: String },
    /// The binary is rebuilt in a new environment under the old version.
    /// The package does not otherwise change in that release.
    RebuildWithoutBump { release: u64, package: String, architecture: String },
    /// One minute after `release`, an extra release carries a patch-level
    /// update of `package`; the next regular release moves on cleanly.
    HiddenVersion {
        release: u64,
        package: String,
        #[serde(default)]
        forge_binary: bool,
    },
    /// A key scoped to another package signs the update; the archive
    /// accepts it anyway.
    OutOfScopeUpload { release: u64, package: String },
    /// An expired key signs the update; the archive accepts it anyway.
    ExpiredKeyUpload { release: u64, package: String },
    /// The committing log forks before `release` and serves the fork to a
    /// victim client.
    Equivocation { release: u64 },
}

impl ScenarioInjection {
    pub fn release(&self) -> u64 {
        match self {
            ScenarioInjection::SkipSource { release, .. }
            | ScenarioInjection::DropSource { release, .. }
            | ScenarioInjection::ForgeBinary { release, .. }
            | ScenarioInjection::RebuildWithoutBump { release, .. }
            | ScenarioInjection::HiddenVersion { release, .. }
            | ScenarioInjection::OutOfScopeUpload { release, .. }
            | ScenarioInjection::ExpiredKeyUpload { release, .. }
            | ScenarioInjection::Equivocation { release } => *release,
        }
    }

    pub fn package(&self) -> Option<&str> {
        match self {
            ScenarioInjection::SkipSource { package, .. }
            | ScenarioInjection::DropSource { package, .. }
            | ScenarioInjection::ForgeBinary { package, .. }
            | ScenarioInjection::RebuildWithoutBump { package, .. }
            | ScenarioInjection::HiddenVersion { package, .. }
            | ScenarioInjection::OutOfScopeUpload { package, .. }
            | ScenarioInjection::ExpiredKeyUpload { package, .. } => Some(package),
            ScenarioInjection::Equivocation { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    #[default]
    Memory,
    /// Logs keep their trees in a database and blobs in files.
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Regular releases.
    pub n_releases: u64,
    /// Number of source packages, named `pkg000`, `pkg001`, ...
    pub packages: usize,
    /// Probability that a package changes in a regular release.
    pub churn: f64,
    #[serde(default = "default_arches")]
    pub architectures: Vec<String>,
    #[serde(default)]
    pub injections: Vec<ScenarioInjection>,
    pub topology: Topology,
    /// Inclusive range of source payload sizes.
    #[serde(default = "default_payload_bytes")]
    pub payload_bytes: (usize, usize),
    #[serde(default)]
    pub storage: Storage,
}

fn default_arches() -> Vec<String> {
    vec!["amd64".into(), "arm64".into()]
}

fn default_payload_bytes() -> (usize, usize) {
    (1024, 64 * 1024)
}

/// Package whose uploads are signed by the scoped maintainer key.
pub const SCOPED_PACKAGE: &str = "pkg000";

pub fn package_name(i: usize) -> String {
    format!("pkg{i:03}")
}

impl Scenario {
    pub fn honest(seed: u64, n_releases: u64, packages: usize, topology: Topology) -> Self {
        Scenario {
            seed,
            n_releases,
            packages,
            churn: 0.2,
            architectures: default_arches(),
            injections: Vec::new(),
            topology,
            payload_bytes: default_payload_bytes(),
            storage: Storage::Memory,
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read(path).map_err(|e| HarnessError::Scenario(format!("{}: {e}", path.display())))?;
        let s: Scenario = serde_json::from_slice(&raw).map_err(|e| HarnessError::Scenario(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Scenario(m));
        if self.n_releases == 0 || self.packages == 0 || self.packages > 1000 {
            return bad("need at least one release and 1..=1000 packages".into());
        }
        if !(0.0..=1.0).contains(&self.churn) {
            return bad(format!("churn {} outside [0, 1]", self.churn));
        }
        if self.architectures.is_empty() {
            return bad("no architectures".into());
        }
        if self.payload_bytes.0 == 0 || self.payload_bytes.0 > self.payload_bytes.1 {
            return bad(format!("bad payload range {:?}", self.payload_bytes));
        }
        let names: BTreeSet<String> = (0..self.packages).map(package_name).collect();
        let mut taken = BTreeSet::new();
        let mut forks = BTreeSet::new();
        for inj in &self.injections {
            let r = inj.release();
            if r >= self.n_releases {
                return bad(format!("{inj:?}: release out of range"));
            }
            if let Some(p) = inj.package() {
                if !names.contains(p) {
                    return bad(format!("{inj:?}: unknown package"));
                }
                if !taken.insert((r, p.to_string())) {
                    return bad(format!("{inj:?}: one injection per package and release"));
                }
            } else if !forks.insert(r) {
                return bad(format!("{inj:?}: one fork per release"));
            }
            match inj {
                ScenarioInjection::ForgeBinary { architecture, .. } | ScenarioInjection::RebuildWithoutBump { architecture, .. }
                    if !self.architectures.contains(architecture) =>
                {
                    return bad(format!("{inj:?}: unknown architecture"));
                }
                ScenarioInjection::RebuildWithoutBump { release: 0, .. } | ScenarioInjection::ExpiredKeyUpload { release: 0, .. } => {
                    return bad(format!("{inj:?}: needs an earlier release"));
                }
                // A forked root can be one leaf larger than the main view, and a
                // monitor only judges roots its copy of the log has reached.
                ScenarioInjection::Equivocation { release } if *release + 1 >= self.n_releases => {
                    return bad(format!("{inj:?}: needs a following regular release"));
                }
                ScenarioInjection::HiddenVersion { release, .. } if *release + 1 >= self.n_releases => {
                    return bad(format!("{inj:?}: needs a following regular release"));
                }
                ScenarioInjection::OutOfScopeUpload { package, .. } if package == SCOPED_PACKAGE => {
                    return bad(format!("{inj:?}: the scoped key may upload {SCOPED_PACKAGE}"));
                }
                _ => {}
            }
        }
        for inj in &self.injections {
            if let ScenarioInjection::HiddenVersion { release, package, .. } = inj {
                if taken.contains(&(release + 1, package.clone())) {
                    return bad(format!("{inj:?}: package is injected again in the next release"));
                }
            }
        }
        Ok(())
    }
}
