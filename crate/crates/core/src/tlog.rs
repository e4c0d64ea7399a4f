//! Log-level records: entry kinds, inclusion promises, signed tree roots and
//! witness receipts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{PublicKey, Signature, SigningKey};
use crate::merkle::leaf_hash;
use crate::model::{parse_digest, parse_signature, parse_u64, Canonical, Millis, ModelError};
use crate::stanza::{self, Paragraph};
use crate::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    ReleaseFile,
    IndexFile,
    SourcePackage,
    RemovalNotice,
    WitnessedRoot,
    KeyListPackage,
    Buildinfo,
}

impl EntryKind {
    pub const ALL: [EntryKind; 7] = [
        EntryKind::ReleaseFile,
        EntryKind::IndexFile,
        EntryKind::SourcePackage,
        EntryKind::RemovalNotice,
        EntryKind::WitnessedRoot,
        EntryKind::KeyListPackage,
        EntryKind::Buildinfo,
    ];

    /// Domain-separation byte prepended to the payload in the leaf hash.
    pub fn tag(self) -> u8 {
        match self {
            EntryKind::ReleaseFile => 1,
            EntryKind::IndexFile => 2,
            EntryKind::SourcePackage => 3,
            EntryKind::RemovalNotice => 4,
            EntryKind::WitnessedRoot => 5,
            EntryKind::KeyListPackage => 6,
            EntryKind::Buildinfo => 7,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        EntryKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::ReleaseFile => "release_file",
            EntryKind::IndexFile => "index_file",
            EntryKind::SourcePackage => "source_package",
            EntryKind::RemovalNotice => "removal_notice",
            EntryKind::WitnessedRoot => "witnessed_root",
            EntryKind::KeyListPackage => "key_list_package",
            EntryKind::Buildinfo => "buildinfo",
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown entry kind {s:?}"))
    }
}

/// `leaf_hash(tag || payload)`.
pub fn entry_leaf_hash(kind: EntryKind, payload: &[u8]) -> Digest {
    let mut data = Vec::with_capacity(payload.len() + 1);
    data.push(kind.tag());
    data.extend_from_slice(payload);
    leaf_hash(&data)
}

/// Metadata of one log leaf. The payload itself lives in the blob store,
/// addressed by `payload_digest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: u64,
    pub kind: EntryKind,
    pub payload_digest: Digest,
    pub leaf_hash: Digest,
    pub submitted_at: Millis,
}

/// A log's signed promise to include an item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionPromise {
    pub timestamp: Millis,
    pub item_digest: Digest,
    pub log_id: String,
    pub signature: Signature,
}

impl InclusionPromise {
    pub fn new_signed(timestamp: Millis, item_digest: Digest, log_id: impl Into<String>, key: &SigningKey) -> Self {
        let log_id = log_id.into();
        let signature = key.sign(&promise_message(timestamp, &item_digest, &log_id));
        InclusionPromise { timestamp, item_digest, log_id, signature }
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&promise_message(self.timestamp, &self.item_digest, &self.log_id), &self.signature)
    }
}

fn promise_message(timestamp: Millis, item_digest: &Digest, log_id: &str) -> Vec<u8> {
    let mut m = Vec::with_capacity(8 + 32 + log_id.len() + 12);
    m.extend_from_slice(b"swt-promise\n");
    m.extend_from_slice(&timestamp.to_be_bytes());
    m.extend_from_slice(item_digest.as_bytes());
    m.extend_from_slice(log_id.as_bytes());
    m
}

/// Signed tree root: the log's commitment to its tree at one size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTreeRoot {
    pub log_id: String,
    pub tree_size: u64,
    pub root_hash: Digest,
    pub timestamp: Millis,
    pub signature: Signature,
}

impl SignedTreeRoot {
    pub fn new_signed(log_id: impl Into<String>, tree_size: u64, root_hash: Digest, timestamp: Millis, key: &SigningKey) -> Self {
        let mut s = SignedTreeRoot {
            log_id: log_id.into(),
            tree_size,
            root_hash,
            timestamp,
            signature: Signature([0; 64]),
        };
        s.signature = key.sign(&s.signed_bytes());
        s
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        self.paragraph(false).to_bytes()
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.signed_bytes(), &self.signature)
    }

    /// Digest under which the STR is logged as a witnessed root.
    pub fn digest(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }

    fn paragraph(&self, with_signature: bool) -> Paragraph {
        let mut p = Paragraph::new();
        p.push("Log-Id", &self.log_id)
            .push("Tree-Size", self.tree_size)
            .push("Root-Hash", self.root_hash)
            .push("Timestamp", self.timestamp);
        if with_signature {
            p.push("Signature", self.signature.to_hex());
        }
        p
    }
}

impl Canonical for SignedTreeRoot {
    fn canonical_bytes(&self) -> Vec<u8> {
        self.paragraph(true).to_bytes()
    }

    fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        let p = stanza::parse_paragraph(bytes)?;
        if p.fields().len() != 5 {
            return Err(ModelError::invalid("Log-Id", "unexpected field set"));
        }
        Ok(SignedTreeRoot {
            log_id: p.require("Log-Id")?.to_string(),
            tree_size: parse_u64(&p, "Tree-Size")?,
            root_hash: parse_digest(&p, "Root-Hash")?,
            timestamp: parse_u64(&p, "Timestamp")?,
            signature: parse_signature(&p, "Signature")?,
        })
    }
}

/// The witnessing log's promise to record a committing log's STR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessReceipt {
    pub committed: SignedTreeRoot,
    pub promise: InclusionPromise,
}

impl WitnessReceipt {
    /// The promise is for exactly this STR and signed by the witness.
    pub fn verify(&self, witness_key: &PublicKey) -> bool {
        self.promise.item_digest == self.committed.digest() && self.promise.verify_signature(witness_key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_are_distinct() {
        let mut tags: Vec<u8> = EntryKind::ALL.iter().map(|k| k.tag()).collect();
        tags.sort();
        tags.dedup();
        assert_eq!(tags.len(), EntryKind::ALL.len());
        for k in EntryKind::ALL {
            assert_eq!(EntryKind::from_tag(k.tag()), Some(k));
            assert_eq!(k.as_str().parse::<EntryKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
        assert_ne!(entry_leaf_hash(EntryKind::ReleaseFile, b"x"), entry_leaf_hash(EntryKind::IndexFile, b"x"));
    }

    #[test]
    fn str_signature_and_round_trip() {
        let key = SigningKey::from_seed(b"log");
        let s = SignedTreeRoot::new_signed("log-a", 9, Digest::of(b"r"), 123, &key);
        assert!(s.verify_signature(&key.public_key()));
        let parsed = SignedTreeRoot::parse(&s.canonical_bytes()).unwrap();
        assert_eq!(parsed, s);
        let mut grown = s.clone();
        grown.tree_size = 10;
        assert!(!grown.verify_signature(&key.public_key()));
    }

    #[test]
    fn promise_binds_all_fields() {
        let key = SigningKey::from_seed(b"log");
        let p = InclusionPromise::new_signed(5, Digest::of(b"item"), "log-a", &key);
        assert!(p.verify_signature(&key.public_key()));
        let mut other_log = p.clone();
        other_log.log_id = "log-b".into();
        assert!(!other_log.verify_signature(&key.public_key()));
        let mut later = p;
        later.timestamp = 6;
        assert!(!later.verify_signature(&key.public_key()));
    }

    #[test]
    fn witness_receipt_digest() {
        let log = SigningKey::from_seed(b"log");
        let witness = SigningKey::from_seed(b"witness");
        let s = SignedTreeRoot::new_signed("log-a", 9, Digest::of(b"r"), 123, &log);
        let promise = InclusionPromise::new_signed(130, Digest::of(&s.canonical_bytes()), "log-w", &witness);
        let receipt = WitnessReceipt { committed: s.clone(), promise };
        assert!(receipt.verify(&witness.public_key()));
        let mut wrong = receipt;
        wrong.committed.timestamp += 1;
        assert!(!wrong.verify(&witness.public_key()));
    }
}
