//! Experiment configuration, read from a TOML document.
//!
//! Every key lives under a section named after the module it configures:
//! `[experiment]`, `[data]`, `[signal]`, `[features]`, `[train]`, `[embed]`.
//! Missing keys take their defaults; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Band, Direction, Domain};
use crate::embed::TsneConfig;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::signal::channel::{DEFAULT_RICIAN_K, DEFAULT_SNR_DB};
use crate::signal::{ChannelConfig, Fading};
use crate::train::TrainConfig;

pub const DEFAULT_OUT_DIR: &str = "dann-amc-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub signal: SignalSection,
    pub features: FeaturesSection,
    pub train: TrainConfig,
    pub embed: EmbedSection,
}

/// Which cells to run and where to put them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub bands: Vec<Band>,
    pub directions: Vec<Direction>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Cells run concurrently; 0 means one per CPU.
    pub jobs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            bands: Band::ALL.to_vec(),
            directions: Direction::ALL.to_vec(),
            seeds: vec![0],
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generate feature CSVs with the built-in channel simulator.
    #[default]
    Simulate,
    /// Read the per-band CSV files listed under `[data.csv]`.
    Csv,
}

/// One band's pair of dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvPair {
    pub rayleigh: PathBuf,
    pub rician: PathBuf,
}

impl CsvPair {
    pub fn path(&self, domain: Domain) -> &Path {
        match domain {
            Domain::Rayleigh => &self.rayleigh,
            Domain::Rician => &self.rician,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Where simulated CSVs are written; defaults to `<out_dir>/data`.
    pub dir: Option<PathBuf>,
    pub label_column: String,
    pub csv: BTreeMap<Band, CsvPair>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Simulate,
            dir: None,
            label_column: "label".into(),
            csv: BTreeMap::new(),
        }
    }
}

/// Per-band replacements for the channel defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SignalOverride {
    pub snr_db: Option<f64>,
    pub k_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub per_class: usize,
    pub frame_length: usize,
    pub snr_db: f64,
    pub k_factor: f64,
    pub fading: Fading,
    pub seed: u64,
    pub bands: BTreeMap<Band, SignalOverride>,
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection {
            per_class: 400,
            frame_length: 256,
            snr_db: DEFAULT_SNR_DB,
            k_factor: DEFAULT_RICIAN_K,
            fading: Fading::Block,
            seed: 0,
            bands: BTreeMap::new(),
        }
    }
}

impl SignalSection {
    /// Channel settings for one (band, domain) file. Each file gets its own
    /// generator seed so no two files share a random stream.
    pub fn channel(&self, band: Band, domain: Domain) -> ChannelConfig {
        let band_idx = Band::ALL.iter().position(|b| *b == band).expect("known band") as u64;
        let domain_idx = Domain::ALL.iter().position(|d| *d == domain).expect("known domain") as u64;
        let seed = self
            .seed
            .wrapping_mul(16)
            .wrapping_add(band_idx * 2 + domain_idx);
        let mut cfg = ChannelConfig::preset(domain, band, seed);
        let over = self.bands.get(&band).cloned().unwrap_or_default();
        cfg.snr_db = over.snr_db.unwrap_or(self.snr_db);
        cfg.k_factor = over.k_factor.unwrap_or(self.k_factor);
        cfg.fading = self.fading;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub groups: FeatureSpec,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            groups: FeatureSpec::all(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub enabled: bool,
    /// Rows kept per (class, domain) pair before embedding.
    pub per_group: usize,
    pub tsne: TsneConfig,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection {
            enabled: true,
            per_group: 200,
            tsne: TsneConfig::default(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentSection::default(),
            data: DataSection::default(),
            signal: SignalSection::default(),
            features: FeaturesSection::default(),
            train: TrainConfig::default(),
            embed: EmbedSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.bands.is_empty() || e.directions.is_empty() || e.seeds.is_empty() {
            return Err(Error::Config(
                "experiment needs at least one band, direction and seed".into(),
            ));
        }
        if self.signal.per_class == 0 || self.signal.frame_length == 0 {
            return Err(Error::Config(
                "signal per_class and frame_length must be at least 1".into(),
            ));
        }
        if self.data.source == DataSource::Csv {
            if let Some(b) = e.bands.iter().find(|b| !self.data.csv.contains_key(b)) {
                return Err(Error::Config(format!(
                    "data source is csv but [data.csv.\"{b}\"] is missing"
                )));
            }
        }
        if self.embed.enabled && self.embed.per_group == 0 {
            return Err(Error::Config("embed per_group must be at least 1".into()));
        }
        self.train.validate()
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data
            .dir
            .clone()
            .unwrap_or_else(|| self.experiment.out_dir.join("data"))
    }

    /// Hash of every setting that changes a cell's results. The cell
    /// selection (bands, directions, seeds), output location and job count
    /// are left out so that widening a run does not invalidate finished cells.
    pub fn fingerprint(&self) -> Result<String> {
        let relevant = serde_json::json!({
            "data": { "source": self.data.source, "label_column": self.data.label_column },
            "signal": self.signal,
            "features": self.features,
            "train": self.train,
            "embed": self.embed,
        });
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&relevant)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.experiment.bands.len(), 5);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.bands = vec![Band::Mhz100];
        cfg.signal.bands.insert(
            Band::Ghz1,
            SignalOverride {
                snr_db: Some(5.0),
                k_factor: None,
            },
        );
        cfg.train.lambda_fixed = Some(0.5);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn parses_namespaced_keys() {
        let text = r#"
            [experiment]
            bands = ["100MHz"]
            directions = ["rician_to_rayleigh"]
            seeds = [1, 2]

            [signal]
            per_class = 50

            [signal.bands."100MHz"]
            snr_db = 10.0

            [features]
            groups = ["cumulants"]

            [train]
            epochs = 3
            early_stop = "source_val"

            [embed]
            enabled = false
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.experiment.seeds, vec![1, 2]);
        assert_eq!(cfg.features.groups.dim(), 7);
        assert_eq!(cfg.signal.channel(Band::Mhz100, Domain::Rician).snr_db, 10.0);
        assert_eq!(cfg.signal.channel(Band::Mhz1, Domain::Rician).snr_db, 15.0);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_csv() {
        assert!(ExperimentConfig::from_toml("[train]\nlearning_rate = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[data]\nsource = \"csv\"\n").is_err());
    }

    #[test]
    fn file_seeds_are_distinct() {
        let s = SignalSection::default();
        let mut seeds: Vec<u64> = Band::ALL
            .iter()
            .flat_map(|&b| Domain::ALL.map(|d| s.channel(b, d).seed))
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10);
    }

    #[test]
    fn fingerprint_ignores_cell_selection() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.experiment.seeds = vec![4, 5];
        b.experiment.jobs = 3;
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        b.train.epochs = 7;
        assert_ne!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    }
}
