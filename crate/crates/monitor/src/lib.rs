//! Full-copy monitor. Mirrors each followed log, recomputes its tree, and
//! examines every logged release file:
//!
//! - completeness: indices and sources are logged before the release;
//! - source availability: every binary has its source in the release;
//! - version consistency: changed packages carry a greater version;
//! - maintainers: changed sources are signed by a key the key list allowed;
//! - reproducibility: changed binaries rebuild to the published bytes;
//! - frequency: release gaps against the archive's interval policy;
//! - cross-log: roots witnessed in another log match the local tree.
//!
//! ```
//! use swt_core::crypto::SigningKey;
//! use swt_monitor::{Monitor, MonitorConfig};
//!
//! let archive = SigningKey::from_seed(b"archive").public_key();
//! let mut monitor = Monitor::new(MonitorConfig::new(archive));
//! assert!(monitor.run_cycle(0).is_empty());
//! ```

mod alert;
pub mod checks;
pub mod crosslog;
mod monitor;
pub mod report;
mod state;
mod view;

pub use alert::{read_alerts, Alert, AlertEvidence, AlertSink, Blame, Category};
pub use monitor::{Checks, FollowedLog, Monitor, MonitorConfig};
pub use state::{record_key, LocalEntry, LocalLog, MonitorState, PackageState, SourceChange, TimelineEntry};
pub use view::{IndexSlot, ReleaseView};

#[derive(Debug, thiserror::Error)]
pub enum MonitorError {
    #[error(transparent)]
    Client(#[from] swt_core::client::ClientError),
    #[error("log {0} is not followed")]
    UnknownLog(String),
    #[error("tree root from {0} is not signed by its key")]
    BadTreeRoot(String),
    #[error("undecodable entry: {0}")]
    Decode(String),
    #[error("monitor state: {0}")]
    State(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Publication(#[from] swt_core::bundle::PublicationError),
}
