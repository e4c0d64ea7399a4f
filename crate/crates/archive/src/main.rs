use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use swt_archive::config::ArchiveConfig;
use swt_archive::server::UploadServer;
use swt_archive::{CutOptions, Injection};
use swt_core::clock::{Clock, SystemClock};
use swt_core::model::{Canonical, SourcePackage};

#[derive(Parser)]
#[command(name = "swt-archive", about = "Accept uploads and publish logged releases")]
struct Cli {
    #[arg(long, default_value = "archive.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a source package envelope against the key list and queue it.
    Accept { pkg_file: PathBuf },
    /// Build, sign, submit and publish the next release.
    CutRelease {
        #[arg(long)]
        force_interval_bypass: bool,
        /// e.g. `skip-source:NAME`, `forge-binary:NAME/ARCH`. Repeatable.
        #[arg(long = "inject")]
        injections: Vec<Injection>,
    },
    /// Serve the upload endpoint.
    Serve,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = ArchiveConfig::load(&cli.config)?;
    let archive = cfg.open()?;
    match cli.command {
        Command::Accept { pkg_file } => {
            let raw = std::fs::read(&pkg_file).with_context(|| pkg_file.display().to_string())?;
            let pkg = SourcePackage::parse(&raw)?;
            let item = archive.accept_upload(pkg, SystemClock.now_ms(), false);
            archive.save_state(&cfg.state_path)?;
            println!("{}", serde_json::to_string_pretty(&item)?);
            if !item.verdict.is_accepted() {
                bail!("upload rejected");
            }
        }
        Command::CutRelease { force_interval_bypass, injections } => {
            let opts = CutOptions { bypass_interval: force_interval_bypass, injections };
            let published = archive.cut_release(SystemClock.now_ms(), &opts)?;
            archive.save_state(&cfg.state_path)?;
            match &published.dir {
                Some(dir) => println!("{}", dir.display()),
                None => println!("release {}", published.release.release_id),
            }
        }
        Command::Serve => {
            let archive = Arc::new(archive);
            let server = UploadServer::start(Arc::clone(&archive), Arc::new(SystemClock), &cfg.listen)?;
            log::info!("upload endpoint on {}", server.url());
            let state_path = cfg.state_path.clone();
            std::thread::spawn(move || loop {
                std::thread::sleep(std::time::Duration::from_secs(2));
                if let Err(e) = archive.save_state(&state_path) {
                    log::error!("saving state: {e}");
                }
            });
            server.join();
        }
    }
    Ok(())
}
