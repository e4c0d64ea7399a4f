use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{parse_digest, parse_signature, parse_u64, Canonical, IndexKind, Millis, ModelError, PackageId};
use crate::crypto::{PublicKey, Signature, SigningKey};
use crate::stanza::{self, Paragraph};
use crate::Digest;

/// Default release validity: two weeks.
pub const VALIDITY_WINDOW_MS: Millis = 14 * 24 * 3600 * 1000;

/// Pointer from a release file to one of its indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRef {
    pub kind: IndexKind,
    pub architecture: String,
    pub sha256: Digest,
    pub size: u64,
}

impl IndexRef {
    fn to_line(&self) -> String {
        format!("{} {} {} {}", self.kind, self.architecture, self.sha256, self.size)
    }

    fn from_line(line: &str) -> Result<Self, String> {
        let parts: Vec<&str> = line.split(' ').collect();
        let [kind, arch, sha, size] = parts[..] else {
            return Err(format!("expected `kind arch sha256 size`, got {line:?}"));
        };
        if size.len() > 1 && size.starts_with('0') {
            return Err(format!("non-canonical size {size:?}"));
        }
        Ok(IndexRef {
            kind: kind.parse()?,
            architecture: arch.to_string(),
            sha256: Digest::from_hex(sha).map_err(|e| e.to_string())?,
            size: size.parse().map_err(|_| format!("bad size {size:?}"))?,
        })
    }
}

/// The signed top-level manifest of one archive state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseFile {
    pub release_id: u64,
    pub issued_at: Millis,
    pub valid_until: Millis,
    pub index_refs: Vec<IndexRef>,
    pub buildinfo_ref: Digest,
    pub keylist_ref: PackageId,
    pub signature: Signature,
}

impl ReleaseFile {
    /// Bytes covered by the archive signature: everything but the signature line.
    pub fn signed_bytes(&self) -> Vec<u8> {
        self.paragraph(false).to_bytes()
    }

    pub fn sign(&mut self, key: &SigningKey) {
        self.signature = key.sign(&self.signed_bytes());
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.signed_bytes(), &self.signature)
    }

    /// Whether `now` lies inside `[issued_at - skew, valid_until + skew]`.
    pub fn is_valid_at(&self, now: Millis, skew: Millis) -> bool {
        now.saturating_add(skew) >= self.issued_at && now <= self.valid_until.saturating_add(skew)
    }

    pub fn index_ref(&self, kind: IndexKind, architecture: &str) -> Option<&IndexRef> {
        self.index_refs.iter().find(|r| r.kind == kind && r.architecture == architecture)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.valid_until <= self.issued_at {
            return Err(ModelError::invalid("Valid-Until", "must be later than Issued-At"));
        }
        let mut digests = BTreeSet::new();
        let mut slots = BTreeSet::new();
        for r in &self.index_refs {
            if !digests.insert(r.sha256) {
                return Err(ModelError::invalid("Indices", format!("duplicate index digest {}", r.sha256)));
            }
            if !slots.insert((r.kind, r.architecture.as_str())) {
                return Err(ModelError::invalid("Indices", format!("duplicate index {} {}", r.kind, r.architecture)));
            }
        }
        Ok(())
    }

    fn paragraph(&self, with_signature: bool) -> Paragraph {
        let mut p = Paragraph::new();
        p.push("Release", self.release_id)
            .push("Issued-At", self.issued_at)
            .push("Valid-Until", self.valid_until)
            .push("Buildinfo", self.buildinfo_ref)
            .push("Key-List", &self.keylist_ref)
            .push_lines("Indices", self.index_refs.iter().map(IndexRef::to_line));
        if with_signature {
            p.push("Signature", self.signature.to_hex());
        }
        p
    }
}

impl Canonical for ReleaseFile {
    fn canonical_bytes(&self) -> Vec<u8> {
        self.paragraph(true).to_bytes()
    }

    fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        let p = stanza::parse_paragraph(bytes)?;
        let indices = p.get("Indices").ok_or_else(|| p.error("Indices", "missing field"))?;
        if !indices.value.is_empty() {
            return Err(p.error("Indices", "entries go on continuation lines").into());
        }
        let index_refs = indices
            .continuation
            .iter()
            .map(|l| IndexRef::from_line(l).map_err(|e| p.error("Indices", e)))
            .collect::<Result<_, _>>()?;
        let release = ReleaseFile {
            release_id: parse_u64(&p, "Release")?,
            issued_at: parse_u64(&p, "Issued-At")?,
            valid_until: parse_u64(&p, "Valid-Until")?,
            buildinfo_ref: parse_digest(&p, "Buildinfo")?,
            keylist_ref: p.parse_field("Key-List")?,
            index_refs,
            signature: parse_signature(&p, "Signature")?,
        };
        if p.fields().len() != 7 {
            return Err(ModelError::invalid("Release", "unexpected extra fields"));
        }
        release.validate()?;
        Ok(release)
    }
}

/// Signed, logged statement that a source blob was withdrawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalNotice {
    pub package: PackageId,
    /// Digest of the withdrawn source envelope.
    pub source_digest: Digest,
    pub removed_at: Millis,
    pub reason: String,
    pub signature: Signature,
}

impl RemovalNotice {
    pub fn new_signed(package: PackageId, source_digest: Digest, removed_at: Millis, reason: impl Into<String>, key: &SigningKey) -> Self {
        let mut notice = RemovalNotice {
            package,
            source_digest,
            removed_at,
            reason: reason.into(),
            signature: Signature([0; 64]),
        };
        notice.signature = key.sign(&notice.signed_bytes());
        notice
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        self.paragraph(false).to_bytes()
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.signed_bytes(), &self.signature)
    }

    fn paragraph(&self, with_signature: bool) -> Paragraph {
        let mut p = Paragraph::new();
        p.push("Removed", &self.package)
            .push("Source-SHA256", self.source_digest)
            .push("Removed-At", self.removed_at)
            .push("Reason", &self.reason);
        if with_signature {
            p.push("Signature", self.signature.to_hex());
        }
        p
    }
}

impl Canonical for RemovalNotice {
    fn canonical_bytes(&self) -> Vec<u8> {
        self.paragraph(true).to_bytes()
    }

    fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        let p = stanza::parse_paragraph(bytes)?;
        if p.fields().len() != 5 {
            return Err(ModelError::invalid("Removed", "unexpected field set"));
        }
        Ok(RemovalNotice {
            package: p.parse_field("Removed")?,
            source_digest: parse_digest(&p, "Source-SHA256")?,
            removed_at: parse_u64(&p, "Removed-At")?,
            reason: p.require("Reason")?.to_string(),
            signature: parse_signature(&p, "Signature")?,
        })
    }
}
