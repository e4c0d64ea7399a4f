use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use swt_core::clock::SystemClock;
use swt_core::crypto::SigningKey;
use swt_logserver::{Log, LogConfig, RunningServer};

#[derive(Parser)]
#[command(name = "swt-log", about = "Append-only release log server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve a log described by a TOML config file.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a fresh signing key and print its public half.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Keygen { out } => {
            let key = SigningKey::generate();
            key.save(&out)?;
            println!("{}", key.public_key().to_hex());
        }
        Command::Serve { config } => {
            let cfg = LogConfig::load(&config)?;
            let settings = cfg.settings()?;
            let clock = Arc::new(SystemClock);
            let log = match &cfg.storage {
                Some(dir) => Log::open(settings, clock, dir).with_context(|| format!("opening {}", dir.display()))?,
                None => Log::in_memory(settings, clock),
            };
            let server = RunningServer::start(log, &cfg.listen, cfg.workers)?;
            log::info!("{} ({:?}) listening on {}", cfg.log_id, cfg.role, server.url());
            server.join();
        }
    }
    Ok(())
}
