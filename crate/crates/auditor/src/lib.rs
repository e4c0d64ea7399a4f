//! Client-side release verification: promise, inclusion, consistency
//! against pinned roots, signature and validity window, and the
//! cross-logged root in a witnessing log.

mod evidence;
mod pins;
mod verify;

pub use evidence::{CheckName, Evidence, EvidenceKeys};
pub use pins::PinnedState;
pub use verify::{load_mirror_proofs, Auditor, AuditorConfig, LogTrust, ReleaseInput, WitnessPolicy};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("pin file: {0}")]
    Pins(String),
    #[error("publication: {0}")]
    Publication(#[from] swt_core::bundle::PublicationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub check: CheckName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_id: Option<String>,
    pub detail: String,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub ok: bool,
    /// Logs that passed every check.
    pub passed: Vec<String>,
    pub failures: Vec<Failure>,
    /// Set when the witnessing log could not be consulted.
    #[serde(default)]
    pub witness_unverified: bool,
    /// Proofs fetched live because mirrored ones did not cover the pin.
    #[serde(default)]
    pub fallbacks: u32,
}

impl AuditVerdict {
    /// True when every failure is an unreachable endpoint.
    pub fn infrastructure_only(&self) -> bool {
        !self.failures.is_empty() && self.failures.iter().all(|f| matches!(f.evidence, Evidence::Unreachable { .. }))
    }

    pub fn has_failure(&self, check: CheckName) -> bool {
        self.failures.iter().any(|f| f.check == check)
    }
}
