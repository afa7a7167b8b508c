//! Runs every (band, direction, seed) cell of an experiment.
//!
//! Each cell owns `<out>/runs/<band>/<direction>/seed-<n>/`. The manifest is
//! written last and marks the cell complete; a later run with the same
//! configuration and data skips it. Failed cells leave an `error.txt` and do
//! not stop the others.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cell::{adapt_and_evaluate, embed_representation, CellOutcome};
use super::config::ExperimentConfig;
use super::data::{load_band, BandData, DataFile};
use super::write_atomic;
use crate::data::{SplitPlan, StandardScaler};
use crate::domain::{Band, Direction, Modulation, NUM_CLASSES};
use crate::embed::Embedding2D;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::train::{EarlyStop, History, MetricsReport};

pub const MANIFEST_FORMAT: &str = "dann-amc-run";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const SUMMARY_FILE: &str = "summary.csv";
/// Copy of the configuration a run root was last run with.
pub const ROOT_CONFIG_FILE: &str = "experiment.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Single-threaded, with wall-clock times left out of every artifact.
    pub deterministic: bool,
}

pub fn cell_dir(root: &Path, band: Band, direction: Direction, seed: u64) -> PathBuf {
    root.join("runs")
        .join(band.tag())
        .join(direction.tag())
        .join(format!("seed-{seed}"))
}

/// Target-split evaluation of both models; the source of every reported number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub band: Band,
    pub direction: Direction,
    pub seed: u64,
    pub baseline: MetricsReport,
    pub dann: MetricsReport,
    pub dca_before: f64,
    pub dca_after: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub source_train: usize,
    pub source_val: usize,
    pub target_unlabeled: usize,
    pub target_eval: usize,
}

impl From<&SplitPlan> for SplitSizes {
    fn from(p: &SplitPlan) -> Self {
        SplitSizes {
            source_train: p.source_train.len(),
            source_val: p.source_val.len(),
            target_unlabeled: p.target_unlabeled.len(),
            target_eval: p.target_eval.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub band: Band,
    pub direction: Direction,
    pub seed: u64,
    pub config_fingerprint: String,
    pub source_data: DataFile,
    pub target_data: DataFile,
    /// Configured early-stopping mode and what each trainer actually monitored.
    pub early_stop: EarlyStop,
    pub baseline_monitor: EarlyStop,
    pub dann_monitor: EarlyStop,
    pub baseline_best_epoch: usize,
    pub dann_best_epoch: usize,
    pub dann_fell_back: bool,
    pub splits: SplitSizes,
    pub scaler: StandardScaler,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        let m: Manifest = serde_json::from_slice(&bytes)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "{} is not a version {MANIFEST_VERSION} run manifest",
                path.display()
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub band: Band,
    pub direction: Direction,
    pub seed: u64,
    pub status: CellStatus,
    pub metrics: Option<CellMetrics>,
    pub wall_seconds: Option<f64>,
    pub error: Option<String>,
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Per-class accuracy and confusion counts as CSV: one row per true class,
/// then overall and class-average rows.
pub fn report_csv(report: &MetricsReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["class".to_string(), "accuracy".to_string(), "count".to_string()];
    header.extend(Modulation::ALL.iter().map(|m| format!("pred_{}", m.name())));
    w.write_record(&header)?;
    for (c, m) in Modulation::ALL.iter().enumerate() {
        let row = &report.confusion[c];
        let mut rec = vec![
            m.name().to_string(),
            report.per_class_acc[c].map(|a| a.to_string()).unwrap_or_default(),
            row.iter().sum::<usize>().to_string(),
        ];
        rec.extend(row.iter().map(|n| n.to_string()));
        w.write_record(&rec)?;
    }
    let blanks = vec![String::new(); NUM_CLASSES];
    for (name, value) in [("overall", report.overall_acc), ("average", report.avg_acc)] {
        let mut rec = vec![name.to_string(), value.to_string(), report.n.to_string()];
        rec.extend(blanks.iter().cloned());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Human-readable rendering of a metrics report.
pub fn report_text(title: &str, report: &MetricsReport) -> String {
    let mut s = format!("{title}\n\n{:<10}{:>10}", "Class", "Acc. (%)");
    for m in Modulation::ALL {
        let _ = write!(s, "{:>9}", m.display_name());
    }
    s.push('\n');
    for (c, m) in Modulation::ALL.iter().enumerate() {
        let acc = report.per_class_acc[c].map_or("n/a".to_string(), |a| format!("{a:.2}"));
        let _ = write!(s, "{:<10}{acc:>10}", m.display_name());
        for n in report.confusion[c] {
            let _ = write!(s, "{n:>9}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\nOverall accuracy: {:.2}%", report.overall_acc);
    let _ = writeln!(s, "Class-average accuracy: {:.2}%", report.avg_acc);
    let _ = writeln!(s, "Evaluated rows: {}", report.n);
    if report.missing_classes {
        s.push_str("Some classes are absent from the evaluation split; their accuracy is undefined.\n");
    }
    s
}

fn history_files(name: &str, h: &History, files: &mut Vec<(String, Vec<u8>)>, steps: bool) -> Result<()> {
    files.push((format!("{name}_epochs.csv"), csv_bytes(|b| h.write_epochs_csv(b))?));
    if steps {
        files.push((format!("{name}_steps.csv"), csv_bytes(|b| h.write_steps_csv(b))?));
    }
    Ok(())
}

fn embedding_files(
    name: &str,
    title: &str,
    emb: &Embedding2D,
    files: &mut Vec<(String, Vec<u8>)>,
) -> Result<()> {
    files.push((format!("tsne_{name}.csv"), csv_bytes(|b| emb.write_csv(b))?));
    files.push((format!("tsne_{name}.svg"), emb.to_svg(title)?.into_bytes()));
    Ok(())
}

/// Every artifact of a finished cell except the manifest, as (file name, bytes).
fn cell_artifacts(
    cfg: &ExperimentConfig,
    data: &BandData,
    direction: Direction,
    seed: u64,
    out: &mut CellOutcome,
) -> Result<(CellMetrics, Vec<(String, Vec<u8>)>)> {
    let band = data.band;
    let names = &data.get(direction.source()).feature_names;
    let mut files = Vec::new();

    let mut cell_cfg = cfg.clone();
    cell_cfg.experiment.bands = vec![band];
    cell_cfg.experiment.directions = vec![direction];
    cell_cfg.experiment.seeds = vec![seed];
    cell_cfg.train.seed = seed;
    files.push(("config.toml".into(), cell_cfg.to_toml()?.into_bytes()));
    files.push(("splits.json".into(), json_bytes(&out.plan)?));

    history_files("baseline", &out.baseline_history, &mut files, false)?;
    history_files("dann", &out.dann_history, &mut files, true)?;

    let label = format!("{} {}", band.display_name(), direction.display_name());
    for (name, report) in [("baseline", &out.baseline_report), ("dann", &out.dann_report)] {
        files.push((format!("{name}_report.csv"), report_csv(report)?));
        let title = format!("{label}: {} on the target evaluation split", model_title(name));
        files.push((format!("{name}_report.txt"), report_text(&title, report).into_bytes()));
    }
    files.push(("baseline.ckpt.json".into(), out.baseline.to_checkpoint(names).to_bytes()?));
    files.push(("dann.ckpt.json".into(), out.dann.to_checkpoint(names).to_bytes()?));

    if cfg.embed.enabled {
        let mut tsne_cfg = cfg.embed.tsne.clone();
        tsne_cfg.seed = seed;
        let models: [(&str, &mut dyn Classifier); 2] =
            [("baseline", &mut out.baseline), ("dann", &mut out.dann)];
        for (name, model) in models {
            let emb = embed_representation(model, &out.split, cfg.embed.per_group, &tsne_cfg)?;
            embedding_files(name, &format!("{label}: {}", model_title(name)), &emb, &mut files)?;
        }
    }

    let metrics = CellMetrics {
        band,
        direction,
        seed,
        baseline: out.baseline_report.clone(),
        dann: out.dann_report.clone(),
        dca_before: out.dca_before,
        dca_after: out.dca_after,
    };
    files.push((METRICS_FILE.into(), json_bytes(&metrics)?));
    Ok((metrics, files))
}

fn model_title(name: &str) -> &'static str {
    if name == "baseline" {
        "baseline"
    } else {
        "DANN"
    }
}

/// The manifest of a finished cell, if it was produced from the same
/// configuration and data.
fn completed(dir: &Path, fingerprint: &str, source: &DataFile, target: &DataFile) -> Option<(Manifest, CellMetrics)> {
    let m = Manifest::load(dir.join(MANIFEST_FILE)).ok()?;
    if m.config_fingerprint != fingerprint
        || m.source_data.sha256 != source.sha256
        || m.target_data.sha256 != target.sha256
        || !m.files.iter().all(|f| dir.join(f).is_file())
    {
        return None;
    }
    let metrics = serde_json::from_slice(&fs::read(dir.join(METRICS_FILE)).ok()?).ok()?;
    Some((m, metrics))
}

fn run_cell(
    cfg: &ExperimentConfig,
    root: &Path,
    data: &BandData,
    direction: Direction,
    seed: u64,
    opts: RunOptions,
) -> Result<(Manifest, CellMetrics)> {
    let band = data.band;
    let dir = cell_dir(root, band, direction, seed);
    let fingerprint = cfg.fingerprint()?;
    let (source_file, target_file) = (data.file(direction.source()), data.file(direction.target()));
    if let Some(done) = completed(&dir, &fingerprint, source_file, target_file) {
        log::info!("{band} {direction} seed {seed}: already complete, skipping");
        return Ok(done);
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;

    log::info!("{band} {direction} seed {seed}: training");
    let start = Instant::now();
    let mut train = cfg.train.clone();
    train.seed = seed;
    let mut out = adapt_and_evaluate(data.get(direction.source()), data.get(direction.target()), &train)?;
    let (metrics, files) = cell_artifacts(cfg, data, direction, seed, &mut out)?;
    for (name, bytes) in &files {
        write_atomic(&dir.join(name), bytes)?;
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        band,
        direction,
        seed,
        config_fingerprint: fingerprint,
        source_data: source_file.clone(),
        target_data: target_file.clone(),
        early_stop: cfg.train.early_stop,
        baseline_monitor: out.baseline_history.monitor,
        dann_monitor: out.dann_history.monitor,
        baseline_best_epoch: out.baseline_history.best_epoch,
        dann_best_epoch: out.dann_history.best_epoch,
        dann_fell_back: out.dann_history.fell_back,
        splits: SplitSizes::from(&out.plan),
        scaler: out.scaler.clone(),
        files: files.into_iter().map(|(name, _)| name).collect(),
        wall_seconds: (!opts.deterministic).then(|| start.elapsed().as_secs_f64()),
    };
    write_atomic(&dir.join(MANIFEST_FILE), &json_bytes(&manifest)?)?;
    log::info!(
        "{band} {direction} seed {seed}: baseline {:.2}%, DANN {:.2}%, DCA {:.4} -> {:.4}",
        metrics.baseline.overall_acc,
        metrics.dann.overall_acc,
        metrics.dca_before,
        metrics.dca_after
    );
    Ok((manifest, metrics))
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "band",
        "direction",
        "seed",
        "status",
        "baseline_overall_acc",
        "baseline_avg_acc",
        "dann_overall_acc",
        "dann_avg_acc",
        "dca_before",
        "dca_after",
        "wall_seconds",
        "error",
    ])?;
    for r in rows {
        let m = r.metrics.as_ref();
        let num = |f: fn(&CellMetrics) -> f64| m.map(|m| f(m).to_string()).unwrap_or_default();
        w.write_record([
            r.band.tag().to_string(),
            r.direction.tag().to_string(),
            r.seed.to_string(),
            if r.status == CellStatus::Ok { "ok" } else { "failed" }.to_string(),
            num(|m| m.baseline.overall_acc),
            num(|m| m.baseline.avg_acc),
            num(|m| m.dann.overall_acc),
            num(|m| m.dann.avg_acc),
            num(|m| m.dca_before),
            num(|m| m.dca_after),
            r.wall_seconds.map(|s| format!("{s:.3}")).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs every configured cell under `cfg.experiment.out_dir` and writes
/// `summary.csv`. Cell failures are reported in the returned rows, not as an
/// error; errors are reserved for problems with the run root itself.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    let root = &cfg.experiment.out_dir;
    fs::create_dir_all(root).map_err(|e| Error::file(root, e))?;
    write_atomic(&root.join(ROOT_CONFIG_FILE), cfg.to_toml()?.as_bytes())?;

    let jobs = if opts.deterministic { 1 } else { cfg.experiment.jobs };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;

    let bands: Vec<(Band, std::result::Result<BandData, String>)> = cfg
        .experiment
        .bands
        .iter()
        .map(|&band| {
            let loaded = pool.install(|| load_band(cfg, band)).map_err(|e| e.to_string());
            if let Err(e) = &loaded {
                log::error!("{band}: cannot load data: {e}");
            }
            (band, loaded)
        })
        .collect();

    let mut cells = Vec::new();
    for (band, data) in &bands {
        for &direction in &cfg.experiment.directions {
            for &seed in &cfg.experiment.seeds {
                cells.push((*band, data, direction, seed));
            }
        }
    }

    use rayon::prelude::*;
    let rows: Vec<SummaryRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(band, data, direction, seed)| {
                let result = match data {
                    Err(e) => Err(format!("data: {e}")),
                    Ok(data) => catch_unwind(AssertUnwindSafe(|| {
                        run_cell(cfg, root, data, direction, seed, opts)
                    }))
                    .map_err(panic_message)
                    .and_then(|r| r.map_err(|e| e.to_string())),
                };
                match result {
                    Ok((manifest, metrics)) => SummaryRow {
                        band,
                        direction,
                        seed,
                        status: CellStatus::Ok,
                        metrics: Some(metrics),
                        wall_seconds: manifest.wall_seconds.filter(|_| !opts.deterministic),
                        error: None,
                    },
                    Err(e) => {
                        log::error!("{band} {direction} seed {seed}: {e}");
                        let dir = cell_dir(root, band, direction, seed);
                        let _ = write_atomic(&dir.join("error.txt"), format!("{e}\n").as_bytes());
                        SummaryRow {
                            band,
                            direction,
                            seed,
                            status: CellStatus::Failed,
                            metrics: None,
                            wall_seconds: None,
                            error: Some(e),
                        }
                    }
                }
            })
            .collect()
    });
    write_atomic(&root.join(SUMMARY_FILE), &summary_csv(&rows)?)?;
    Ok(rows)
}
