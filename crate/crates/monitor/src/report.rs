//! Alert summaries: per-category counts, per-release counts and the two
//! per-release plots (binaries without source over time, and releases
//! bucketed by how many packages lack a version increment).

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alert::{Alert, Category};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseRow {
    pub release_id: u64,
    /// Binaries whose source is not in the release, counted per architecture.
    pub source_missing: usize,
    /// Sources absent from the log.
    pub source_unlogged: usize,
    pub binary_version_missing: usize,
    pub source_version_missing: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertSummary {
    pub by_category: BTreeMap<Category, usize>,
    pub releases: Vec<ReleaseRow>,
}

pub const BUCKETS: [&str; 4] = ["0", "1-100", "101-1000", ">1000"];

pub fn bucket(n: usize) -> usize {
    match n {
        0 => 0,
        1..=100 => 1,
        101..=1000 => 2,
        _ => 3,
    }
}

/// Counts alerts per category and per release. Every id in `release_ids`
/// gets a row, with zeros where nothing was found.
pub fn summarize(alerts: &[Alert], release_ids: impl IntoIterator<Item = u64>) -> AlertSummary {
    let mut by_category: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    let mut rows: BTreeMap<u64, ReleaseRow> = release_ids.into_iter().map(|id| (id, ReleaseRow { release_id: id, ..Default::default() })).collect();
    for a in alerts {
        *by_category.entry(a.category).or_default() += 1;
        let Some(id) = a.release_id else { continue };
        let row = rows.entry(id).or_insert_with(|| ReleaseRow { release_id: id, ..Default::default() });
        match a.category {
            Category::SourceUnavailable => row.source_missing += 1,
            Category::MissingSource => row.source_unlogged += 1,
            Category::VersionNotIncremented if a.subject.ends_with("/source") => row.source_version_missing += 1,
            Category::VersionNotIncremented => row.binary_version_missing += 1,
            _ => {}
        }
    }
    AlertSummary { by_category, releases: rows.into_values().collect() }
}

impl AlertSummary {
    /// Releases per bucket of affected packages, for binaries and sources.
    pub fn version_buckets(&self) -> [[usize; 4]; 2] {
        let mut out = [[0; 4]; 2];
        for r in &self.releases {
            out[0][bucket(r.binary_version_missing)] += 1;
            out[1][bucket(r.source_version_missing)] += 1;
        }
        out
    }

    /// Writes `tables/*.csv` and `plots/*.svg` under `out`.
    pub fn write(&self, out: &Path) -> Result<(), ReportError> {
        let tables = out.join("tables");
        let plots = out.join("plots");
        std::fs::create_dir_all(&tables)?;
        std::fs::create_dir_all(&plots)?;

        let mut w = csv::Writer::from_path(tables.join("alert_categories.csv"))?;
        w.write_record(["category", "count"])?;
        for (c, n) in &self.by_category {
            w.write_record([c.to_string(), n.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(tables.join("alerts_per_release.csv"))?;
        for r in &self.releases {
            w.serialize(r)?;
        }
        w.flush()?;

        let buckets = self.version_buckets();
        let mut w = csv::Writer::from_path(tables.join("version_increment_buckets.csv"))?;
        w.write_record(["bucket", "binary_releases", "source_releases"])?;
        for (i, b) in BUCKETS.iter().enumerate() {
            w.write_record([b.to_string(), buckets[0][i].to_string(), buckets[1][i].to_string()])?;
        }
        w.flush()?;

        self.plot_source_missing(&plots.join("source_missing.svg"))?;
        plot_buckets(&plots.join("version_increment_missing.svg"), &buckets)?;
        Ok(())
    }

    fn plot_source_missing(&self, path: &Path) -> Result<(), ReportError> {
        let root = SVGBackend::new(path, (800, 300)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let max_x = self.releases.last().map(|r| r.release_id + 1).unwrap_or(1);
        let max_y = self.releases.iter().map(|r| r.source_missing).max().unwrap_or(0).max(1);
        let mut chart = ChartBuilder::on(&root)
            .caption("Binaries without corresponding source", ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(45)
            .build_cartesian_2d(0u64..max_x, 0usize..max_y + 1)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("release").y_desc("number of packages").draw().map_err(plot_err)?;
        chart.draw_series(LineSeries::new(self.releases.iter().map(|r| (r.release_id, r.source_missing)), &BLACK)).map_err(plot_err)?;
        root.present().map_err(plot_err)?;
        Ok(())
    }
}

fn plot_buckets(path: &Path, buckets: &[[usize; 4]; 2]) -> Result<(), ReportError> {
    let root = SVGBackend::new(path, (600, 300)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let max_y = buckets.iter().flatten().copied().max().unwrap_or(0).max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption("Version increment missing", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0f64..4f64, 0usize..max_y + max_y / 10 + 1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(8)
        .x_label_formatter(&|x| {
            let i = (x - 0.5).round();
            if (x - 0.5 - i).abs() < 1e-6 && (0.0..4.0).contains(&i) {
                BUCKETS[i as usize].to_string()
            } else {
                String::new()
            }
        })
        .x_desc("number of packages affected")
        .y_desc("number of releases")
        .draw()
        .map_err(plot_err)?;
    for (series, (style, label)) in [(BLACK.mix(0.2).filled(), "binary packages"), (BLACK.mix(0.6).filled(), "source packages")].into_iter().enumerate() {
        let offset = 0.1 + 0.4 * series as f64;
        chart
            .draw_series((0..4).map(|i| Rectangle::new([(i as f64 + offset, 0), (i as f64 + offset + 0.4, buckets[series][i])], style)))
            .map_err(plot_err)?
            .label(label)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], style));
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("plot: {0}")]
    Plot(String),
}

fn plot_err<E: std::fmt::Display>(e: E) -> ReportError {
    ReportError::Plot(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alert::Blame;

    #[test]
    fn buckets_match_figure_ranges() {
        assert_eq!([0, 1, 100, 101, 1000, 1001].map(bucket), [0, 1, 1, 2, 2, 3]);
    }

    #[test]
    fn summary_counts_zero_rows() {
        let alerts = vec![
            Alert::new(Category::SourceUnavailable, Some(2), "a/amd64", Blame::Archive, ""),
            Alert::new(Category::SourceUnavailable, Some(2), "a/arm64", Blame::Archive, ""),
            Alert::new(Category::VersionNotIncremented, Some(1), "a/source", Blame::Archive, ""),
            Alert::new(Category::Equivocation, None, "log-a", Blame::Log, ""),
        ];
        let s = summarize(&alerts, 0..4);
        assert_eq!(s.releases.len(), 4);
        assert_eq!(s.releases[2].source_missing, 2);
        assert_eq!(s.releases[1].source_version_missing, 1);
        assert_eq!(s.by_category[&Category::Equivocation], 1);
        assert_eq!(s.version_buckets(), [[4, 0, 0, 0], [3, 1, 0, 0]]);
        let dir = tempfile::tempdir().unwrap();
        s.write(dir.path()).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("plots/version_increment_missing.svg")).unwrap();
        assert!(svg.contains("<svg"));
        assert!(dir.path().join("tables/alerts_per_release.csv").exists());
    }
}
