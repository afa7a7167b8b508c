//! Per-band datasets for the runner: simulated into `<dir>/<band>/<domain>.csv`
//! or read from user-supplied files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig};
use super::write_atomic;
use crate::data::{read_csv, CsvOptions, Dataset};
use crate::domain::{Band, Domain};
use crate::error::{Error, Result};
use crate::features::extract;
use crate::signal::gen_frameset;

/// Identity of a dataset file as recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFile {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct BandData {
    pub band: Band,
    pub rayleigh: Dataset,
    pub rician: Dataset,
    pub files: [DataFile; 2],
}

impl BandData {
    pub fn get(&self, domain: Domain) -> &Dataset {
        match domain {
            Domain::Rayleigh => &self.rayleigh,
            Domain::Rician => &self.rician,
        }
    }

    pub fn file(&self, domain: Domain) -> &DataFile {
        &self.files[domain_slot(domain)]
    }
}

fn domain_slot(domain: Domain) -> usize {
    match domain {
        Domain::Rayleigh => 0,
        Domain::Rician => 1,
    }
}

pub fn simulated_path(dir: &Path, band: Band, domain: Domain) -> PathBuf {
    dir.join(band.tag()).join(format!("{}.csv", domain.name()))
}

/// Everything that determines a simulated file's contents. Stored next to the
/// CSV so stale files are regenerated when the settings change.
fn generation_record(cfg: &ExperimentConfig, band: Band, domain: Domain) -> serde_json::Value {
    serde_json::json!({
        "channel": cfg.signal.channel(band, domain),
        "per_class": cfg.signal.per_class,
        "frame_length": cfg.signal.frame_length,
        "features": cfg.features.groups,
    })
}

fn record_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Generates frames for one (band, domain), extracts features and writes the
/// CSV. Returns the file path.
pub fn simulate_file(cfg: &ExperimentConfig, dir: &Path, band: Band, domain: Domain) -> Result<PathBuf> {
    let channel = cfg.signal.channel(band, domain);
    let frames = gen_frameset(cfg.signal.per_class, cfg.signal.frame_length, &channel)?;
    let (features, quality) = extract(&frames, &cfg.features.groups)?;
    if !quality.is_clean() {
        log::warn!(
            "{band} {domain}: {} degenerate frames flagged during feature extraction",
            quality.flags.len()
        );
    }
    let ds = features.into_dataset(Some(band))?;
    let mut bytes = Vec::new();
    ds.write_csv(&mut bytes)?;
    let path = simulated_path(dir, band, domain);
    write_atomic(&path, &bytes)?;
    let record = serde_json::to_vec_pretty(&generation_record(cfg, band, domain))?;
    write_atomic(&record_path(&path), &record)?;
    Ok(path)
}

/// Simulates every configured band into `dir`, two files per band.
pub fn simulate_all(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for &band in &cfg.experiment.bands {
        for domain in Domain::ALL {
            let path = simulate_file(cfg, dir, band, domain)?;
            log::info!("wrote {}", path.display());
            paths.push(path);
        }
    }
    Ok(paths)
}

fn is_current(cfg: &ExperimentConfig, path: &Path, band: Band, domain: Domain) -> bool {
    let Ok(bytes) = fs::read(record_path(path)) else {
        return false;
    };
    path.is_file()
        && serde_json::from_slice::<serde_json::Value>(&bytes)
            .is_ok_and(|v| v == generation_record(cfg, band, domain))
}

fn load_file(path: &Path, opts: &CsvOptions) -> Result<(Dataset, DataFile)> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    let ds = read_csv(bytes.as_slice(), opts).map_err(|e| match e {
        Error::Parse { row, column, detail } => Error::Parse {
            row,
            column,
            detail: format!("{detail} in {}", path.display()),
        },
        other => other,
    })?;
    let file = DataFile {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        rows: ds.len(),
    };
    Ok((ds, file))
}

/// Loads both domains of a band. In simulate mode, files that are missing or
/// were generated with different settings are (re)generated first.
pub fn load_band(cfg: &ExperimentConfig, band: Band) -> Result<BandData> {
    let mut loaded = Vec::with_capacity(2);
    for domain in Domain::ALL {
        let path = match cfg.data.source {
            DataSource::Simulate => {
                let dir = cfg.data_dir();
                let path = simulated_path(&dir, band, domain);
                if !is_current(cfg, &path, band, domain) {
                    log::info!("simulating {band} {domain}");
                    simulate_file(cfg, &dir, band, domain)?;
                }
                path
            }
            DataSource::Csv => cfg
                .data
                .csv
                .get(&band)
                .ok_or_else(|| Error::Config(format!("no CSV files configured for {band}")))?
                .path(domain)
                .to_path_buf(),
        };
        let mut opts = CsvOptions::new(domain).band(band);
        opts.label_column = cfg.data.label_column.clone();
        loaded.push(load_file(&path, &opts)?);
    }
    let (rician, rician_file) = loaded.pop().expect("two domains");
    let (rayleigh, rayleigh_file) = loaded.pop().expect("two domains");
    if rayleigh.feature_names != rician.feature_names {
        return Err(Error::invalid(format!(
            "{band}: Rayleigh and Rician files have different feature columns"
        )));
    }
    Ok(BandData {
        band,
        rayleigh,
        rician,
        files: [rayleigh_file, rician_file],
    })
}
