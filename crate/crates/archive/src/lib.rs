//! Archive-side release pipeline.
//!
//! Maintainers upload signed source packages, which are checked against the
//! key list. [`Archive::cut_release`] builds whatever changed, regenerates
//! the indices, signs a release file, submits every part to the configured
//! logs and publishes only once a quorum of logs has issued a tree root
//! that covers the release.

mod archive;
pub mod config;
mod inject;
mod publish;
pub mod server;
mod upload;

pub use archive::{Archive, ArchiveOptions, LogTarget, PublishedRelease, KEYLIST_PACKAGE};
pub use inject::{CutOptions, Injection};
pub use publish::write_publication;
pub use swt_core::policy::{enforce_release_interval, IntervalDecision, IntervalPolicy};
pub use upload::{RejectReason, UploadQueueItem, Verdict};

use swt_core::model::{KeyListViolation, Millis, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("release deferred by interval policy until {until}")]
    Deferred { until: Millis },
    #[error("only {ok} of {needed} required logs committed the release: {}", failures.join("; "))]
    QuorumUnmet { ok: usize, needed: usize, failures: Vec<String> },
    #[error("builder is not deterministic for {package} on {architecture}")]
    Nondeterministic { package: String, architecture: String },
    #[error("key list update breaks the append-only rule: {0:?}")]
    KeyList(Vec<KeyListViolation>),
    #[error("no source {0} in the archive")]
    UnknownSource(String),
    #[error("invalid release material: {0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("state file: {0}")]
    State(String),
}
