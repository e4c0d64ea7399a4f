use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{parse_u64, validate_name, Canonical, Millis, ModelError, PackageId};
use crate::crypto::{KeyId, PublicKey};
use crate::stanza::{self, Paragraph};
use crate::version::VersionString;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyScope {
    /// Full member: may upload any package.
    All,
    Packages(BTreeSet<String>),
}

impl KeyScope {
    pub fn covers(&self, package: &str) -> bool {
        match self {
            KeyScope::All => true,
            KeyScope::Packages(names) => names.contains(package),
        }
    }
}

impl fmt::Display for KeyScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyScope::All => f.write_str("all"),
            KeyScope::Packages(names) => {
                let joined: Vec<&str> = names.iter().map(String::as_str).collect();
                write!(f, "packages {}", joined.join(" "))
            }
        }
    }
}

impl std::str::FromStr for KeyScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(KeyScope::All);
        }
        let rest = s.strip_prefix("packages ").ok_or_else(|| format!("expected `all` or `packages ...`, got {s:?}"))?;
        let mut names = BTreeSet::new();
        let mut last: Option<&str> = None;
        for name in rest.split(' ') {
            validate_name(name)?;
            if last.is_some_and(|l| l >= name) {
                return Err("package names must be sorted and unique".into());
            }
            last = Some(name);
            names.insert(name.to_string());
        }
        Ok(KeyScope::Packages(names))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub key_id: KeyId,
    pub public_key: PublicKey,
    pub scope: KeyScope,
    pub valid_from: Millis,
    pub expires_at: Millis,
}

impl KeyEntry {
    pub fn new(public_key: PublicKey, scope: KeyScope, valid_from: Millis, expires_at: Millis) -> Self {
        KeyEntry { key_id: public_key.key_id(), public_key, scope, valid_from, expires_at }
    }
}

/// Why a key may not sign a given upload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum AclFailure {
    #[error("key {key_id} is not in the key list")]
    UnknownKey { key_id: KeyId },
    #[error("key {key_id} is not valid before {valid_from}")]
    NotYetValid { key_id: KeyId, valid_from: Millis },
    #[error("key {key_id} expired at {expires_at}")]
    Expired { key_id: KeyId, expires_at: Millis },
    #[error("key {key_id} is not authorised for package {package}")]
    OutOfScope { key_id: KeyId, package: String },
}

/// A break of the append-only rule between two key-list versions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum KeyListViolation {
    EntryRemoved { key_id: KeyId },
    EntryRewritten { key_id: KeyId },
    ExpiryExtended { key_id: KeyId, old: Millis, new: Millis },
    VersionNotIncreased { old: VersionString, new: VersionString },
}

/// The maintainer upload ACL, published as its own logged package.
///
/// Entries never disappear between versions; revocation only moves
/// `expires_at` earlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyList {
    pub name: String,
    pub version: VersionString,
    pub entries: Vec<KeyEntry>,
}

impl KeyList {
    pub fn id(&self) -> PackageId {
        PackageId::new(self.name.clone(), self.version.clone())
    }

    pub fn entry(&self, key_id: &KeyId) -> Option<&KeyEntry> {
        self.entries.iter().find(|e| &e.key_id == key_id)
    }

    /// Checks that `key_id` may upload `package` at time `at`.
    pub fn authorize(&self, key_id: &KeyId, package: &str, at: Millis) -> Result<&KeyEntry, AclFailure> {
        let entry = self.entry(key_id).ok_or(AclFailure::UnknownKey { key_id: *key_id })?;
        if at < entry.valid_from {
            return Err(AclFailure::NotYetValid { key_id: *key_id, valid_from: entry.valid_from });
        }
        if at >= entry.expires_at {
            return Err(AclFailure::Expired { key_id: *key_id, expires_at: entry.expires_at });
        }
        if !entry.scope.covers(package) {
            return Err(AclFailure::OutOfScope { key_id: *key_id, package: package.to_string() });
        }
        Ok(entry)
    }

    /// Lists every way `newer` fails to extend `self`.
    pub fn successor_violations(&self, newer: &KeyList) -> Vec<KeyListViolation> {
        let mut out = Vec::new();
        if newer.version <= self.version && newer != self {
            out.push(KeyListViolation::VersionNotIncreased { old: self.version.clone(), new: newer.version.clone() });
        }
        let by_id: BTreeMap<KeyId, &KeyEntry> = newer.entries.iter().map(|e| (e.key_id, e)).collect();
        for old in &self.entries {
            match by_id.get(&old.key_id) {
                None => out.push(KeyListViolation::EntryRemoved { key_id: old.key_id }),
                Some(new) => {
                    if new.public_key != old.public_key || new.scope != old.scope || new.valid_from != old.valid_from {
                        out.push(KeyListViolation::EntryRewritten { key_id: old.key_id });
                    } else if new.expires_at > old.expires_at {
                        out.push(KeyListViolation::ExpiryExtended {
                            key_id: old.key_id,
                            old: old.expires_at,
                            new: new.expires_at,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_name(&self.name).map_err(|e| ModelError::invalid("Key-List", e))?;
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if e.public_key.key_id() != e.key_id {
                return Err(ModelError::invalid("Key-Id", format!("{} does not match its public key", e.key_id)));
            }
            if !seen.insert(e.key_id) {
                return Err(ModelError::invalid("Key-Id", format!("duplicate key {}", e.key_id)));
            }
            if e.expires_at <= e.valid_from {
                return Err(ModelError::invalid("Expires-At", format!("key {} expires before it is valid", e.key_id)));
            }
        }
        Ok(())
    }
}

impl Canonical for KeyList {
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut header = Paragraph::new();
        header.push("Key-List", &self.name).push("Version", &self.version);
        let mut paragraphs = vec![header];
        for e in &self.entries {
            let mut p = Paragraph::new();
            p.push("Key-Id", e.key_id)
                .push("Public-Key", e.public_key.to_hex())
                .push("Scope", &e.scope)
                .push("Valid-From", e.valid_from)
                .push("Expires-At", e.expires_at);
            paragraphs.push(p);
        }
        stanza::write_paragraphs(&paragraphs)
    }

    fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        let paragraphs = stanza::parse_paragraphs(bytes)?;
        let Some((header, rest)) = paragraphs.split_first() else {
            return Err(ModelError::invalid("Key-List", "empty document"));
        };
        let mut entries = Vec::with_capacity(rest.len());
        for p in rest {
            let public_key = PublicKey::from_hex(p.require("Public-Key")?).map_err(|e| p.error("Public-Key", e.to_string()))?;
            entries.push(KeyEntry {
                key_id: p.parse_field("Key-Id")?,
                public_key,
                scope: p.parse_field("Scope")?,
                valid_from: parse_u64(p, "Valid-From")?,
                expires_at: parse_u64(p, "Expires-At")?,
            });
        }
        let list = KeyList {
            name: header.require("Key-List")?.to_string(),
            version: header.parse_field("Version")?,
            entries,
        };
        list.validate()?;
        Ok(list)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigningKey;

    fn list(version: &str, entries: Vec<KeyEntry>) -> KeyList {
        KeyList { name: "archive-keyring".into(), version: VersionString::parse(version).unwrap(), entries }
    }

    fn scoped(names: &[&str]) -> KeyScope {
        KeyScope::Packages(names.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn acl_decisions() {
        let full = SigningKey::from_seed(b"dd");
        let dm = SigningKey::from_seed(b"dm");
        let kl = list(
            "1",
            vec![
                KeyEntry::new(full.public_key(), KeyScope::All, 0, 100),
                KeyEntry::new(dm.public_key(), scoped(&["bar", "foo"]), 10, 50),
            ],
        );
        assert!(kl.authorize(&full.key_id(), "anything", 5).is_ok());
        assert!(kl.authorize(&dm.key_id(), "foo", 20).is_ok());
        assert!(matches!(kl.authorize(&dm.key_id(), "baz", 20), Err(AclFailure::OutOfScope { .. })));
        assert!(matches!(kl.authorize(&dm.key_id(), "foo", 50), Err(AclFailure::Expired { .. })));
        assert!(matches!(kl.authorize(&dm.key_id(), "foo", 9), Err(AclFailure::NotYetValid { .. })));
        let stranger = SigningKey::from_seed(b"x").key_id();
        assert!(matches!(kl.authorize(&stranger, "foo", 20), Err(AclFailure::UnknownKey { .. })));
    }

    #[test]
    fn round_trip() {
        let a = SigningKey::from_seed(b"a");
        let b = SigningKey::from_seed(b"b");
        let kl = list(
            "2",
            vec![KeyEntry::new(a.public_key(), KeyScope::All, 0, 100), KeyEntry::new(b.public_key(), scoped(&["x", "y"]), 1, 2)],
        );
        let bytes = kl.canonical_bytes();
        let parsed = KeyList::parse(&bytes).unwrap();
        assert_eq!(parsed, kl);
        assert_eq!(parsed.canonical_bytes(), bytes);
    }

    #[test]
    fn append_only_successors() {
        let a = SigningKey::from_seed(b"a");
        let b = SigningKey::from_seed(b"b");
        let ea = KeyEntry::new(a.public_key(), KeyScope::All, 0, 100);
        let eb = KeyEntry::new(b.public_key(), scoped(&["foo"]), 0, 100);
        let v1 = list("1", vec![ea.clone()]);
        let v2 = list("2", vec![ea.clone(), eb.clone()]);
        assert!(v1.successor_violations(&v2).is_empty());
        assert!(v1.successor_violations(&v1).is_empty());

        let mut revoked = ea.clone();
        revoked.expires_at = 40;
        assert!(v2.successor_violations(&list("3", vec![revoked.clone(), eb.clone()])).is_empty());

        let dropped = list("3", vec![eb.clone()]);
        assert_eq!(v2.successor_violations(&dropped), vec![KeyListViolation::EntryRemoved { key_id: a.key_id() }]);

        let mut extended = ea.clone();
        extended.expires_at = 200;
        let v3 = list("3", vec![extended, eb.clone()]);
        assert!(matches!(v2.successor_violations(&v3)[..], [KeyListViolation::ExpiryExtended { .. }]));

        let mut widened = eb.clone();
        widened.scope = KeyScope::All;
        let v3 = list("3", vec![ea.clone(), widened]);
        assert!(matches!(v2.successor_violations(&v3)[..], [KeyListViolation::EntryRewritten { .. }]));

        let stale = list("1", vec![ea, eb]);
        assert!(matches!(v2.successor_violations(&stale)[..], [KeyListViolation::VersionNotIncreased { .. }]));
    }

    #[test]
    fn mismatched_key_id_rejected() {
        let a = SigningKey::from_seed(b"a");
        let mut e = KeyEntry::new(a.public_key(), KeyScope::All, 0, 100);
        e.key_id = SigningKey::from_seed(b"b").key_id();
        assert!(KeyList::parse(&list("1", vec![e]).canonical_bytes()).is_err());
    }
}
