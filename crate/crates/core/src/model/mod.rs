//! Archive metadata: package records and indices, release files, source
//! packages, maintainer key lists, removal notices and build records.
//!
//! Every type here has a canonical stanza encoding ([`Canonical`]) that is
//! byte-stable, so the same value always hashes and signs the same way.

mod keylist;
mod package;
mod release;
mod source;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::stanza::StanzaError;
use crate::version::VersionString;

pub use keylist::{AclFailure, KeyEntry, KeyList, KeyListViolation, KeyScope};
pub use package::{meta_changed, IndexKind, PackageIndex, PackageRecord};
pub use release::{IndexRef, ReleaseFile, RemovalNotice, VALIDITY_WINDOW_MS};
pub use source::{BuildinfoBundle, BuildinfoRecord, SourcePackage};

/// Milliseconds since the Unix epoch.
pub type Millis = u64;

pub const SOURCE_ARCH: &str = "source";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(#[from] StanzaError),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("contract violation: {0}")]
    Contract(String),
}

impl ModelError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        ModelError::Invalid { field: field.to_string(), message: message.into() }
    }
}

/// Byte-stable encoding shared by everything that gets signed or logged.
pub trait Canonical: Sized {
    fn canonical_bytes(&self) -> Vec<u8>;
    fn parse(bytes: &[u8]) -> Result<Self, ModelError>;
}

/// A `name version` pair identifying a package.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PackageId {
    pub name: String,
    pub version: VersionString,
}

impl PackageId {
    pub fn new(name: impl Into<String>, version: VersionString) -> Self {
        PackageId { name: name.into(), version }
    }
}

impl fmt::Display for PackageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.version)
    }
}

impl FromStr for PackageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, version) = s
            .split_once(' ')
            .ok_or_else(|| format!("expected `name version`, got {s:?}"))?;
        validate_name(name)?;
        let version = VersionString::parse(version).map_err(|e| e.to_string())?;
        Ok(PackageId { name: name.to_string(), version })
    }
}

/// Package names: lowercase alphanumerics plus `+ - .`, starting alphanumeric.
pub fn validate_name(name: &str) -> Result<(), String> {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c.is_ascii_digit() => {}
        _ => return Err(format!("invalid package name {name:?}")),
    }
    if chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || "+-.".contains(c)) {
        Ok(())
    } else {
        Err(format!("invalid package name {name:?}"))
    }
}

pub(crate) fn parse_u64(p: &crate::stanza::Paragraph, field: &str) -> Result<u64, ModelError> {
    let raw = p.require(field)?;
    if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) || (raw.len() > 1 && raw.starts_with('0')) {
        return Err(p.error(field, format!("expected canonical integer, got {raw:?}")).into());
    }
    raw.parse().map_err(|_| p.error(field, "integer overflow").into())
}

pub(crate) fn parse_digest(p: &crate::stanza::Paragraph, field: &str) -> Result<crate::Digest, ModelError> {
    let raw = p.require(field)?;
    crate::Digest::from_hex(raw).map_err(|e| p.error(field, e.to_string()).into())
}

pub(crate) fn parse_signature(p: &crate::stanza::Paragraph, field: &str) -> Result<crate::crypto::Signature, ModelError> {
    let raw = p.require(field)?;
    crate::crypto::Signature::from_hex(raw).map_err(|e| p.error(field, e.to_string()).into())
}
