//! End-to-end driver. A [`Scenario`] describes an archive's history and the
//! misbehaviour to inject; [`corpus::generate`] turns it into uploads and
//! the alerts a monitor should raise; [`replay::Replay`] plays it against
//! live logs, an archive, an auditor and a monitor.
//!
//! ```no_run
//! use swt_harness::{replay, Scenario, Topology};
//!
//! let out = replay::run(Scenario::honest(7, 5, 4, Topology::SingleLog)).unwrap();
//! assert!(out.report.comparison.exact);
//! ```

pub mod corpus;
pub mod measure;
pub mod replay;
pub mod report;
mod scenario;

pub use scenario::{package_name, Scenario, ScenarioInjection, Storage, Topology, SCOPED_PACKAGE};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error(transparent)]
    Log(#[from] swt_logserver::LogError),
    #[error(transparent)]
    Archive(#[from] swt_archive::ArchiveError),
    #[error(transparent)]
    Monitor(#[from] swt_monitor::MonitorError),
    #[error(transparent)]
    Report(#[from] swt_monitor::report::ReportError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
