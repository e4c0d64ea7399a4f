use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use swt_harness::{measure, replay, report, Scenario};

#[derive(Parser)]
#[command(name = "swt-harness", about = "Replay scenarios and measure proof and storage sizes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario file and write the report under --out.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Proof-size curve, mirrored proof bundle and storage growth.
    Measure {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 18)]
        max_exp: u32,
        #[arg(long, default_value_t = 270_000)]
        mirror_tree_size: u64,
        #[arg(long, default_value_t = 90)]
        mirror_spacing: u64,
        #[arg(long, default_value_t = 20_000)]
        storage_leaves: u64,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { scenario, out } => {
            let s = Scenario::load(&scenario)?;
            let result = replay::run(s).context("replay failed")?;
            report::write_run(&result, &out)?;
            let r = &result.report;
            println!("corpus {}", r.corpus_digest);
            println!(
                "releases {} audited ok {}, alerts {} (expected {}), exact match {}, roots match {}",
                r.releases.len(),
                r.releases.iter().filter(|x| x.audit_ok).count(),
                r.comparison.observed,
                r.comparison.expected,
                r.comparison.exact,
                r.roots_match()
            );
            for m in &r.comparison.missing {
                println!("missing    {:?} {:?} {}", m.category, m.release_id, m.subject);
            }
            for u in &r.comparison.unexpected {
                println!("unexpected {:?} {:?} {}", u.category, u.release_id, u.subject);
            }
        }
        Command::Measure { out, max_exp, mirror_tree_size, mirror_spacing, storage_leaves } => {
            let curve = measure::proof_curve(8, max_exp, 1);
            let mirror = measure::mirror_bundle(mirror_tree_size, mirror_spacing);
            let storage = measure::storage_curve(storage_leaves, (storage_leaves / 20).max(1), 1)?;
            report::write_measurements(&out, &curve, &mirror, &storage)?;
            println!(
                "inclusion: {:.2} hashes per doubling (r2 {:.3}); consistency: {:.2} (r2 {:.3})",
                curve.inclusion_fit.slope, curve.inclusion_fit.r2, curve.consistency_fit.slope, curve.consistency_fit.r2
            );
            println!("mirror bundle at {}: {} proofs, {} bytes", mirror.tree_size, mirror.proofs, mirror.bytes);
            println!(
                "tree db: {:.1} B/leaf low, {:.1} B/leaf high (ratio {:.3}); blob accounting exact: {}",
                storage.low_slope,
                storage.high_slope,
                storage.slope_ratio(),
                storage.blob_accounting_exact
            );
        }
    }
    Ok(())
}
