use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;
use serde::Deserialize;
use swt_auditor::{Auditor, AuditorConfig, PinnedState, ReleaseInput, WitnessPolicy};
use swt_core::bundle::Publication;
use swt_core::client::LogClient;
use swt_core::clock::{Clock, SystemClock};
use swt_core::crypto::PublicKey;

/// Verify a published release against its logs.
///
/// Exit status: 0 verified, 1 verification failed, 2 infrastructure error.
#[derive(Parser)]
#[command(name = "swt-auditor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct VerifyArgs {
    bundle_dir: PathBuf,
    #[arg(long)]
    pins: PathBuf,
    /// TOML with `archive_key` and `[logs.<id>] public_key` (hex).
    #[arg(long)]
    trust: PathBuf,
    /// Committing log URLs, comma separated.
    #[arg(long, value_delimiter = ',')]
    logs: Vec<String>,
    #[arg(long)]
    witness: Option<String>,
    #[arg(long, default_value_t = 1)]
    quorum: usize,
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    fail_closed: bool,
}

#[derive(Deserialize)]
struct TrustFile {
    archive_key: String,
    logs: BTreeMap<String, TrustedLog>,
}

#[derive(Deserialize)]
struct TrustedLog {
    public_key: String,
    #[serde(default)]
    url: Option<String>,
}

fn key(hex: &str) -> anyhow::Result<PublicKey> {
    PublicKey::from_hex(hex).map_err(|e| anyhow!("bad public key: {e}"))
}

fn run(args: VerifyArgs) -> anyhow::Result<bool> {
    let trust: TrustFile = toml::from_str(&std::fs::read_to_string(&args.trust).context("reading trust file")?)?;
    let mut config = AuditorConfig::new(key(&trust.archive_key)?);
    config.quorum = args.quorum;
    config.offline = args.offline;
    if args.fail_closed {
        config.witness_policy = WitnessPolicy::FailClosed;
    }
    // Log ids come from each log's own tree root unless offline.
    let id_of = |url: &str| -> anyhow::Result<String> { Ok(LogClient::new(url).get_sth()?.log_id) };
    let witness_id = match (&args.witness, args.offline) {
        (Some(url), false) => Some((id_of(url)?, url.clone())),
        _ => None,
    };
    let mut urls = BTreeMap::new();
    for url in &args.logs {
        if !args.offline {
            urls.insert(id_of(url)?, url.clone());
        }
    }
    for (id, t) in &trust.logs {
        let url = urls.get(id).cloned().or_else(|| t.url.clone()).unwrap_or_default();
        let is_witness = witness_id.as_ref().is_some_and(|(w, _)| w == id);
        let url = if is_witness { witness_id.as_ref().unwrap().1.clone() } else { url };
        let witness = if is_witness { None } else { witness_id.as_ref().map(|(w, _)| w.as_str()) };
        config = config.with_log(id.clone(), url, key(&t.public_key)?, witness);
    }
    let publication = Publication::load(&args.bundle_dir)?;
    let input = ReleaseInput::from_publication(&publication);
    let mut pins = PinnedState::load(&args.pins)?;
    let auditor = Auditor::new(config);
    let now = SystemClock.now_ms();
    let mut verdict = auditor.verify_release(&input, &mut pins, now);
    if verdict.ok && witness_id.is_some() {
        verdict = auditor.verify_witnessed(&input, &mut pins, now);
    }
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    if verdict.ok {
        pins.save(&args.pins)?;
        return Ok(true);
    }
    if verdict.infrastructure_only() {
        return Err(anyhow!("logs unreachable"));
    }
    Ok(false)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Verify(args) = Cli::parse().command;
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
