use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use swt_core::bundle::Publication;
use swt_core::clock::{Clock, SystemClock};
use swt_core::crypto::PublicKey;
use swt_core::model::Millis;
use swt_core::policy::IntervalPolicy;
use swt_monitor::{read_alerts, report, AlertSink, Checks, FollowedLog, Monitor, MonitorConfig, MonitorState};

#[derive(Parser)]
#[command(name = "swt-monitor", about = "Mirror transparency logs and examine logged releases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Follow the configured logs until interrupted.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run a single cycle and exit.
        #[arg(long)]
        once: bool,
    },
    /// Examine releases from publication directories against the logs.
    Replay {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize an alert file into tables and plots.
    Report {
        #[arg(long)]
        alerts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of releases, so releases without alerts get rows.
        #[arg(long)]
        releases: Option<u64>,
    },
}

#[derive(Deserialize)]
struct FileConfig {
    archive_key: PublicKey,
    state_path: PathBuf,
    alerts_path: PathBuf,
    #[serde(default = "default_interval")]
    interval_secs: u64,
    #[serde(default)]
    silence_ms: Option<Millis>,
    #[serde(default)]
    policy: IntervalPolicy,
    #[serde(default)]
    checks: Checks,
    logs: Vec<FollowedLog>,
}

fn default_interval() -> u64 {
    60
}

fn load(path: &Path) -> anyhow::Result<(FileConfig, Monitor)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.state_path = base.join(&cfg.state_path);
    cfg.alerts_path = base.join(&cfg.alerts_path);
    let config = MonitorConfig {
        archive_key: cfg.archive_key.clone(),
        logs: cfg.logs.clone(),
        policy: cfg.policy.clone(),
        silence_ms: cfg.silence_ms,
        checks: cfg.checks,
    };
    let state = MonitorState::load(&cfg.state_path)?;
    let monitor = Monitor::with_state(config, state).with_sink(AlertSink::json_lines(&cfg.alerts_path).also_stderr());
    Ok((cfg, monitor))
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, once } => {
            let (cfg, mut monitor) = load(&config)?;
            loop {
                let alerts = monitor.run_cycle(SystemClock.now_ms());
                log::info!("cycle done: {} alerts", alerts.len());
                monitor.state().save(&cfg.state_path)?;
                if once {
                    return Ok(());
                }
                std::thread::sleep(Duration::from_secs(cfg.interval_secs));
            }
        }
        Command::Replay { from, config } => {
            let (cfg, mut monitor) = load(&config)?;
            let mut alerts = monitor.sync_all();
            let publications = Publication::load_all(&from)?;
            alerts.extend(monitor.replay_publications(&publications));
            alerts.extend(monitor.check_frequency(SystemClock.now_ms()));
            alerts.extend(monitor.check_cross_log());
            monitor.state().save(&cfg.state_path)?;
            println!("{} releases examined, {} alerts", publications.len(), alerts.len());
        }
        Command::Report { alerts, out, releases } => {
            let alerts = read_alerts(&alerts).with_context(|| format!("reading {}", alerts.display()))?;
            let ids = match releases {
                Some(n) => (0..n).collect::<Vec<_>>(),
                None => alerts.iter().filter_map(|a| a.release_id).max().map(|m| (0..=m).collect()).unwrap_or_default(),
            };
            let summary = report::summarize(&alerts, ids);
            summary.write(&out)?;
            std::fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
            for (c, n) in &summary.by_category {
                println!("{c:24} {n}");
            }
        }
    }
    Ok(())
}
