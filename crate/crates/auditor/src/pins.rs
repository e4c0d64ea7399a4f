use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use swt_core::tlog::SignedTreeRoot;

use crate::AuditError;

/// Largest verified tree root per log. Without a pin the first verified
/// root is trusted as is.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinnedState {
    #[serde(default)]
    pub logs: BTreeMap<String, SignedTreeRoot>,
    #[serde(default)]
    pub witnesses: BTreeMap<String, SignedTreeRoot>,
}

impl PinnedState {
    pub fn load(path: &Path) -> Result<Self, AuditError> {
        match std::fs::read(path) {
            Ok(raw) => serde_json::from_slice(&raw).map_err(|e| AuditError::Pins(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(PinnedState::default()),
            Err(e) => Err(AuditError::Pins(format!("{}: {e}", path.display()))),
        }
    }

    /// Writes through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<(), AuditError> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| AuditError::Pins(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json).and_then(|_| std::fs::rename(&tmp, path)).map_err(|e| AuditError::Pins(format!("{}: {e}", path.display())))
    }
}
