//! Misbehaviour on command, so monitors have something to catch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Injection {
    /// List the source in Sources but never send it to the logs in this release.
    SkipSourceSubmission { package: String },
    /// Leave the source out of Sources while its binaries stay in Packages.
    DropSourceRecord { package: String },
    /// Ship bytes that the recorded source and buildinfo do not produce.
    ForgeBinary { package: String, architecture: String },
    /// Rebuild in a new environment and keep the old version.
    RebuildWithoutBump { package: String, architecture: String },
}

impl fmt::Display for Injection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Injection::SkipSourceSubmission { package } => write!(f, "skip-source:{package}"),
            Injection::DropSourceRecord { package } => write!(f, "drop-source:{package}"),
            Injection::ForgeBinary { package, architecture } => write!(f, "forge-binary:{package}/{architecture}"),
            Injection::RebuildWithoutBump { package, architecture } => {
                write!(f, "rebuild-without-bump:{package}/{architecture}")
            }
        }
    }
}

impl FromStr for Injection {
    type Err = String;

    /// `skip-source:NAME`, `drop-source:NAME`, `forge-binary:NAME/ARCH`,
    /// `rebuild-without-bump:NAME/ARCH`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| format!("expected KIND:ARG, got {s:?}"))?;
        let pkg_arch = || {
            arg.split_once('/')
                .map(|(p, a)| (p.to_string(), a.to_string()))
                .ok_or_else(|| format!("{kind} needs NAME/ARCH"))
        };
        Ok(match kind {
            "skip-source" => Injection::SkipSourceSubmission { package: arg.into() },
            "drop-source" => Injection::DropSourceRecord { package: arg.into() },
            "forge-binary" => {
                let (package, architecture) = pkg_arch()?;
                Injection::ForgeBinary { package, architecture }
            }
            "rebuild-without-bump" => {
                let (package, architecture) = pkg_arch()?;
                Injection::RebuildWithoutBump { package, architecture }
            }
            other => return Err(format!("unknown injection {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutOptions {
    /// Ignore the release interval policy.
    #[serde(default)]
    pub bypass_interval: bool,
    #[serde(default)]
    pub injections: Vec<Injection>,
}

impl CutOptions {
    pub(crate) fn skips_source(&self, name: &str) -> bool {
        self.injections.iter().any(|i| matches!(i, Injection::SkipSourceSubmission { package } if package == name))
    }

    pub(crate) fn drops_source(&self, name: &str) -> bool {
        self.injections.iter().any(|i| matches!(i, Injection::DropSourceRecord { package } if package == name))
    }

    pub(crate) fn forges(&self, name: &str, arch: &str) -> bool {
        self.injections
            .iter()
            .any(|i| matches!(i, Injection::ForgeBinary { package, architecture } if package == name && architecture == arch))
    }

    pub(crate) fn forged(&self) -> impl Iterator<Item = (&str, &str)> {
        self.injections.iter().filter_map(|i| match i {
            Injection::ForgeBinary { package, architecture } => Some((package.as_str(), architecture.as_str())),
            _ => None,
        })
    }

    pub(crate) fn rebuilds(&self) -> impl Iterator<Item = (&str, &str)> {
        self.injections.iter().filter_map(|i| match i {
            Injection::RebuildWithoutBump { package, architecture } => Some((package.as_str(), architecture.as_str())),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for s in ["skip-source:zlib", "drop-source:a-b", "forge-binary:curl/arm64", "rebuild-without-bump:x/amd64"] {
            assert_eq!(s.parse::<Injection>().unwrap().to_string(), s);
        }
        assert!("forge-binary:curl".parse::<Injection>().is_err());
        assert!("nope:x".parse::<Injection>().is_err());
    }
}
