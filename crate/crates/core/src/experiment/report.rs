//! Report tables rendered purely from the `metrics.json` files of completed
//! cells: domain classification accuracy, average accuracy with improvements,
//! and per-class accuracy for each band.
//!
//! Several seeds in one cell render as the median with the range in
//! parentheses. Missing cells stay blank and are explained in a footnote.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::run::{CellMetrics, Manifest, MANIFEST_FILE, METRICS_FILE, ROOT_CONFIG_FILE};
use super::write_atomic;
use crate::domain::{Band, Direction, Modulation};
use crate::error::{Error, Result};
use crate::train::improvement;

/// A rendered table: every cell is already a display string.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Leading columns holding labels rather than numbers.
    pub label_columns: usize,
    pub footnotes: Vec<String>,
}

impl Table {
    pub fn to_text(&self) -> String {
        let ncol = self.headers.len();
        let width = |j: usize| {
            std::iter::once(&self.headers[j])
                .chain(self.rows.iter().map(|r| &r[j]))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        };
        let widths: Vec<usize> = (0..ncol).map(width).collect();
        let line = |cells: &[String], repeated_group: bool| {
            let mut s = String::new();
            for (j, cell) in cells.iter().enumerate() {
                let cell = if j == 0 && repeated_group { "" } else { cell.as_str() };
                let pad = widths[j] - cell.chars().count();
                if j > 0 {
                    s.push_str("  ");
                }
                if j < self.label_columns {
                    s.push_str(cell);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str(&" ".repeat(pad));
                    s.push_str(cell);
                }
            }
            s.trim_end().to_string()
        };
        let total: usize = widths.iter().sum::<usize>() + 2 * ncol.saturating_sub(1);
        let mut out = format!("{}\n{}\n", self.title, "=".repeat(total));
        out.push_str(&line(&self.headers, false));
        out.push('\n');
        out.push_str(&"-".repeat(total));
        out.push('\n');
        // A leading label equal to the previous row's is printed once per group.
        let mut previous: Option<&String> = None;
        for r in &self.rows {
            let repeated = self.label_columns > 0 && previous == r.first();
            out.push_str(&line(r, repeated));
            out.push('\n');
            previous = r.first();
        }
        for (i, f) in self.footnotes.iter().enumerate() {
            let _ = writeln!(out, "[{}] {f}", i + 1);
        }
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Completed cells the tables were built from.
    pub cells: usize,
}

impl Report {
    pub fn to_text(&self) -> String {
        let texts: Vec<String> = self.tables.iter().map(Table::to_text).collect();
        texts.join("\n")
    }
}

/// `+3.06`, `-3.65`, and `0.00` for anything that rounds to zero.
pub fn signed(v: f64) -> String {
    let s = format!("{v:+.2}");
    if s == "+0.00" || s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median over seeds, with `(min–max)` appended when there is more than one.
fn summarize(values: &[f64], fmt: fn(f64) -> String) -> String {
    match values.len() {
        0 => String::new(),
        1 => fmt(values[0]),
        _ => {
            let mut v = values.to_vec();
            let m = median(&mut v);
            format!("{} ({}–{})", fmt(m), fmt(v[0]), fmt(v[v.len() - 1]))
        }
    }
}

fn fixed2(v: f64) -> String {
    format!("{v:.2}")
}

fn fixed4(v: f64) -> String {
    format!("{v:.4}")
}

/// Scans `<root>/runs` for completed cells and loads their metrics.
pub fn collect_cells(root: &Path) -> Result<Vec<CellMetrics>> {
    let runs = root.join("runs");
    let mut found = Vec::new();
    let Ok(bands) = fs::read_dir(&runs) else {
        return Ok(found);
    };
    let mut dirs = Vec::new();
    for band in bands.flatten() {
        for direction in fs::read_dir(band.path()).into_iter().flatten().flatten() {
            for seed in fs::read_dir(direction.path()).into_iter().flatten().flatten() {
                dirs.push(seed.path());
            }
        }
    }
    dirs.sort();
    for dir in dirs {
        if !dir.join(MANIFEST_FILE).is_file() {
            continue;
        }
        let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
        let path = dir.join(METRICS_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::file(&path, e))?;
        let metrics: CellMetrics = serde_json::from_slice(&bytes)?;
        if (metrics.band, metrics.direction, metrics.seed)
            != (manifest.band, manifest.direction, manifest.seed)
        {
            return Err(Error::invalid(format!(
                "{}: metrics and manifest describe different cells",
                dir.display()
            )));
        }
        found.push(metrics);
    }
    Ok(found)
}

type Grid = BTreeMap<(Band, Direction), Vec<CellMetrics>>;

struct Layout {
    bands: Vec<Band>,
    directions: Vec<Direction>,
    seeds: BTreeSet<u64>,
}

/// Rows to render: the run root's configured grid plus anything found on disk.
fn layout(root: &Path, cells: &[CellMetrics]) -> Layout {
    let mut bands: BTreeSet<Band> = cells.iter().map(|c| c.band).collect();
    let mut directions: BTreeSet<Direction> = cells.iter().map(|c| c.direction).collect();
    let mut seeds: BTreeSet<u64> = cells.iter().map(|c| c.seed).collect();
    if let Ok(cfg) = ExperimentConfig::load(root.join(ROOT_CONFIG_FILE)) {
        bands.extend(&cfg.experiment.bands);
        directions.extend(&cfg.experiment.directions);
        seeds.extend(&cfg.experiment.seeds);
    }
    Layout {
        bands: bands.into_iter().collect(),
        directions: directions.into_iter().collect(),
        seeds,
    }
}

/// Footnote for a (band, direction) with fewer completed seeds than expected.
fn coverage_note(band: Band, direction: Direction, have: usize, want: usize) -> Option<String> {
    let label = format!("{} {}", band.display_name(), direction.display_name());
    match have {
        0 => Some(format!("{label}: no completed run; cells left blank.")),
        n if n < want => Some(format!("{label}: summarizes {n} of {want} seeds.")),
        _ => None,
    }
}

fn table1(grid: &Grid, lay: &Layout) -> Table {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &band in &lay.bands {
        for &direction in &lay.directions {
            let cells = grid.get(&(band, direction)).map_or(&[][..], Vec::as_slice);
            notes.extend(coverage_note(band, direction, cells.len(), lay.seeds.len()));
            let before: Vec<f64> = cells.iter().map(|c| c.dca_before).collect();
            let after: Vec<f64> = cells.iter().map(|c| c.dca_after).collect();
            rows.push(vec![
                band.display_name().to_string(),
                direction.display_name().to_string(),
                summarize(&before, fixed4),
                summarize(&after, fixed4),
            ]);
        }
    }
    Table {
        name: "table1".into(),
        title: "Domain classification accuracy (DCA) before and after adaptation".into(),
        headers: ["Frequency", "Direction", "DCA Before", "DCA After"].map(String::from).to_vec(),
        rows,
        label_columns: 2,
        footnotes: notes,
    }
}

fn table2(grid: &Grid, lay: &Layout) -> Table {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut undefined_percent = false;
    for &band in &lay.bands {
        for &direction in &lay.directions {
            let cells = grid.get(&(band, direction)).map_or(&[][..], Vec::as_slice);
            notes.extend(coverage_note(band, direction, cells.len(), lay.seeds.len()));
            let base: Vec<f64> = cells.iter().map(|c| c.baseline.overall_acc).collect();
            let dann: Vec<f64> = cells.iter().map(|c| c.dann.overall_acc).collect();
            let gains: Vec<_> = cells
                .iter()
                .map(|c| improvement(c.baseline.overall_acc, c.dann.overall_acc))
                .collect();
            let abs: Vec<f64> = gains.iter().map(|g| g.absolute).collect();
            let pct: Vec<f64> = gains.iter().filter_map(|g| g.percent).collect();
            let pct_cell = if !cells.is_empty() && pct.is_empty() {
                undefined_percent = true;
                "n/a".to_string()
            } else {
                summarize(&pct, signed)
            };
            rows.push(vec![
                band.display_name().to_string(),
                direction.display_name().to_string(),
                summarize(&base, fixed2),
                summarize(&dann, fixed2),
                summarize(&abs, signed),
                pct_cell,
            ]);
        }
    }
    notes.push(
        "Accuracy is the percentage of correctly classified rows in the labeled target split."
            .into(),
    );
    if undefined_percent {
        notes.push("n/a: the baseline accuracy is zero, so the relative gain is undefined.".into());
    }
    Table {
        name: "table2".into(),
        title: "Average classification accuracy (%) before and after adaptation".into(),
        headers: [
            "Frequency",
            "Direction",
            "Avg. Baseline",
            "Avg. DANN",
            "Abs. Improvement",
            "% Improvement",
        ]
        .map(String::from)
        .to_vec(),
        rows,
        label_columns: 2,
        footnotes: notes,
    }
}

fn table3(grid: &Grid, lay: &Layout, band: Band) -> Table {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut absent = false;
    for &direction in &lay.directions {
        let cells = grid.get(&(band, direction)).map_or(&[][..], Vec::as_slice);
        notes.extend(coverage_note(band, direction, cells.len(), lay.seeds.len()));
        for (c, m) in Modulation::ALL.iter().enumerate() {
            let base: Vec<f64> = cells.iter().filter_map(|x| x.baseline.per_class_acc[c]).collect();
            let dann: Vec<f64> = cells.iter().filter_map(|x| x.dann.per_class_acc[c]).collect();
            let delta: Vec<f64> = cells
                .iter()
                .filter_map(|x| Some(x.dann.per_class_acc[c]? - x.baseline.per_class_acc[c]?))
                .collect();
            let undefined = !cells.is_empty() && delta.is_empty();
            absent |= undefined;
            let cell = |v: &[f64], f: fn(f64) -> String| {
                if undefined {
                    "n/a".to_string()
                } else {
                    summarize(v, f)
                }
            };
            rows.push(vec![
                direction.display_name().to_string(),
                m.display_name().to_string(),
                cell(&base, fixed2),
                cell(&dann, fixed2),
                cell(&delta, signed),
            ]);
        }
    }
    if absent {
        notes.push("n/a: the class is absent from the evaluation split.".into());
    }
    Table {
        name: format!("table3_{}", band.tag()),
        title: format!(
            "Per-class accuracy (%) before and after adaptation for {}",
            band.display_name()
        ),
        headers: ["Direction", "Modulation", "Baseline", "DANN", "Δ Accuracy"]
            .map(String::from)
            .to_vec(),
        rows,
        label_columns: 2,
        footnotes: notes,
    }
}

/// Builds every table from the run root. An empty root is an error.
pub fn build_report(root: &Path) -> Result<Report> {
    let cells = collect_cells(root)?;
    if cells.is_empty() {
        return Err(Error::invalid(format!(
            "no completed runs under {}",
            root.join("runs").display()
        )));
    }
    let lay = layout(root, &cells);
    let mut grid = Grid::new();
    for c in &cells {
        grid.entry((c.band, c.direction)).or_default().push(c.clone());
    }
    let mut tables = vec![table1(&grid, &lay), table2(&grid, &lay)];
    tables.extend(lay.bands.iter().map(|&b| table3(&grid, &lay, b)));
    Ok(Report {
        tables,
        cells: cells.len(),
    })
}

/// Writes each table as `.csv` and `.txt` plus a combined `report.txt` under
/// `<root>/report/`. Run directories are only read.
pub fn write_report(root: &Path) -> Result<(Report, Vec<PathBuf>)> {
    let report = build_report(root)?;
    let dir = root.join("report");
    let mut written = Vec::new();
    for t in &report.tables {
        for (ext, bytes) in [("csv", t.to_csv()?), ("txt", t.to_text().into_bytes())] {
            let path = dir.join(format!("{}.{ext}", t.name));
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
    }
    let path = dir.join("report.txt");
    write_atomic(&path, report.to_text().as_bytes())?;
    written.push(path);
    Ok((report, written))
}
