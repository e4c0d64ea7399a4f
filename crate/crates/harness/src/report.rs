//! Files written for a run or a measurement.

use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;
use swt_monitor::AlertSink;

use crate::measure::{ProofCurve, StorageCurve};
use crate::replay::RunOutput;
use crate::HarnessError;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn plot_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Replay(format!("plot: {e}"))
}

/// `report.json`, `alerts.jsonl`, the alert tables and plots, and
/// `tables/storage.csv`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), &out.report)?;
    let alerts = dir.join("alerts.jsonl");
    if alerts.exists() {
        std::fs::remove_file(&alerts)?;
    }
    let mut sink = AlertSink::json_lines(&alerts);
    sink.emit(&out.alerts);
    if sink.backlog() > 0 {
        return Err(HarnessError::Replay(format!("could not write {}", alerts.display())));
    }
    out.report.summary.write(dir)?;
    let mut w = csv::Writer::from_path(dir.join("tables/storage.csv"))?;
    for s in &out.report.storage {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// `proofs.json`, `tables/proof_sizes.csv`, `plots/proof_sizes.svg`, and the
/// storage counterparts.
pub fn write_measurements(dir: &Path, curve: &ProofCurve, mirror: &impl Serialize, storage: &StorageCurve) -> Result<(), HarnessError> {
    let tables = dir.join("tables");
    let plots = dir.join("plots");
    std::fs::create_dir_all(&tables)?;
    std::fs::create_dir_all(&plots)?;
    write_json(&dir.join("proofs.json"), &serde_json::json!({ "curve": curve, "mirror": mirror }))?;
    write_json(&dir.join("storage.json"), storage)?;

    let mut w = csv::Writer::from_path(tables.join("proof_sizes.csv"))?;
    for p in &curve.points {
        w.serialize(p)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(tables.join("storage_growth.csv"))?;
    for p in &storage.points {
        w.serialize(p)?;
    }
    w.flush()?;

    let path = plots.join("proof_sizes.svg");
    let root = SVGBackend::new(&path, (700, 350)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let xmax = curve.points.iter().map(|p| p.log2_size).fold(1.0, f64::max);
    let xmin = curve.points.iter().map(|p| p.log2_size).fold(xmax, f64::min);
    let ymax = curve.points.iter().map(|p| p.inclusion_hashes.max(p.consistency_hashes)).fold(1.0, f64::max);
    let mut chart = ChartBuilder::on(&root)
        .caption("Proof length", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(xmin..xmax, 0f64..ymax * 1.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("log2(tree size)").y_desc("hashes").draw().map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(curve.points.iter().map(|p| (p.log2_size, p.inclusion_hashes)), &BLACK))
        .map_err(plot_err)?
        .label("inclusion")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 15, y)], BLACK));
    let grey = BLACK.mix(0.5);
    chart
        .draw_series(LineSeries::new(curve.points.iter().map(|p| (p.log2_size, p.consistency_hashes)), grey))
        .map_err(plot_err)?
        .label("consistency")
        .legend(move |(x, y)| PathElement::new([(x, y), (x + 15, y)], grey));
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    drop(chart);
    drop(root);

    let path = plots.join("storage_growth.svg");
    let root = SVGBackend::new(&path, (700, 350)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let xmax = storage.points.last().map(|p| p.leaves as f64).unwrap_or(1.0);
    let ymax = storage.points.iter().map(|p| p.meta_bytes as f64).fold(1.0, f64::max);
    let mut chart = ChartBuilder::on(&root)
        .caption("Tree database size", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(70)
        .build_cartesian_2d(0f64..xmax, 0f64..ymax * 1.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("leaves").y_desc("bytes").draw().map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(storage.points.iter().map(|p| (p.leaves as f64, p.meta_bytes as f64)), &BLACK))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
