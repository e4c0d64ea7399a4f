use serde::{Deserialize, Serialize};
use swt_core::crypto::KeyId;
use swt_core::model::{AclFailure, KeyList, Millis, PackageId, SourcePackage};
use swt_core::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    BadSignature { key_id: KeyId },
    Acl { failure: AclFailure },
}

impl RejectReason {
    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::BadSignature { .. } => "bad_signature",
            RejectReason::Acl { failure } => match failure {
                AclFailure::UnknownKey { .. } => "unknown_key",
                AclFailure::NotYetValid { .. } => "not_yet_valid",
                AclFailure::Expired { .. } => "expired",
                AclFailure::OutOfScope { .. } => "scope",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected { reason: RejectReason },
    /// Accepted despite failing the ACL; only reachable through the
    /// misbehaviour hooks.
    ForceAccepted { reason: RejectReason },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        !matches!(self, Verdict::Rejected { .. })
    }
}

/// Record of one upload. The payload itself is kept only if accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadQueueItem {
    pub package: PackageId,
    pub payload_digest: Digest,
    pub uploader_key_id: KeyId,
    pub received_at: Millis,
    pub verdict: Verdict,
}

pub(crate) fn check_upload(keylist: &KeyList, pkg: &SourcePackage, now: Millis) -> Result<(), RejectReason> {
    let key_id = pkg.uploader_key_id;
    let entry = keylist.entry(&key_id).ok_or(RejectReason::Acl { failure: AclFailure::UnknownKey { key_id } })?;
    if !pkg.verify_signature(&entry.public_key) {
        return Err(RejectReason::BadSignature { key_id });
    }
    keylist.authorize(&key_id, &pkg.name, now).map(|_| ()).map_err(|failure| RejectReason::Acl { failure })
}
