//! JSON bodies of the log HTTP interface.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | `/log/v1/add-entry` | [`AddEntryRequest`] | [`AddEntryResponse`] |
//! | POST | `/log/v1/flush` | [`FlushRequest`] | [`SignedTreeRoot`] |
//! | GET | `/log/v1/get-sth` | | [`SignedTreeRoot`] |
//! | GET | `/log/v1/get-proof` | `hash`, `tree_size` | [`InclusionProof`](crate::merkle::InclusionProof) |
//! | GET | `/log/v1/get-consistency` | `first`, `second` | [`ConsistencyProof`](crate::merkle::ConsistencyProof) |
//! | GET | `/log/v1/get-entries` | `start`, `end` (inclusive) | [`GetEntriesResponse`] |
//! | GET | `/log/v1/get-source` | `name`, `version` | [`GetSourceResponse`] |
//! | GET | `/log/v1/get-witness` | `tree_size` | [`WitnessReceipt`] |
//! | POST | `/log/v1/add-witnessed-root` | [`AddWitnessedRootRequest`] | [`AddEntryResponse`] |
//!
//! Errors come back as [`ErrorBody`] with a 4xx/5xx status.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::model::Millis;
use crate::tlog::{EntryKind, InclusionPromise, SignedTreeRoot, WitnessReceipt};
use crate::Digest;

pub fn b64_encode(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn b64_decode(s: &str) -> Result<Vec<u8>, base64::DecodeError> {
    STANDARD.decode(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddEntryRequest {
    pub kind: EntryKind,
    pub payload_b64: String,
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddEntryResponse {
    pub promise: InclusionPromise,
    pub leaf_hash: Digest,
    /// Set when this submission was sequenced right away (release files,
    /// witnessed roots).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sth: Option<SignedTreeRoot>,
    /// Witness receipt for `sth`, when the log has a witness and it answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReceipt>,
    #[serde(default)]
    pub witness_pending: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlushRequest {
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddWitnessedRootRequest {
    pub sth: SignedTreeRoot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryData {
    pub index: u64,
    pub kind: EntryKind,
    pub leaf_hash: Digest,
    pub payload_digest: Digest,
    pub submitted_at: Millis,
    /// The original payload, or the removal notice once a source is withdrawn.
    pub payload_b64: String,
    #[serde(default)]
    pub withdrawn: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GetEntriesResponse {
    pub entries: Vec<EntryData>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GetSourceResponse {
    Available { source_b64: String },
    Removed { notice_b64: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Proof types the traffic counters distinguish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    AddEntry,
    Flush,
    GetSth,
    GetProof,
    GetConsistency,
    GetEntries,
    GetSource,
    GetWitness,
    AddWitnessedRoot,
}

impl Endpoint {
    pub fn path(self) -> &'static str {
        match self {
            Endpoint::AddEntry => "/log/v1/add-entry",
            Endpoint::Flush => "/log/v1/flush",
            Endpoint::GetSth => "/log/v1/get-sth",
            Endpoint::GetProof => "/log/v1/get-proof",
            Endpoint::GetConsistency => "/log/v1/get-consistency",
            Endpoint::GetEntries => "/log/v1/get-entries",
            Endpoint::GetSource => "/log/v1/get-source",
            Endpoint::GetWitness => "/log/v1/get-witness",
            Endpoint::AddWitnessedRoot => "/log/v1/add-witnessed-root",
        }
    }
}
