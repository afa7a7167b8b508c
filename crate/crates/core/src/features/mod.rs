//! Fixed-length real feature vectors from complex frames.
//!
//! Three groups, always emitted in this order:
//!
//! | group     | width | names                                             |
//! |-----------|-------|---------------------------------------------------|
//! | moments   | 12    | `mom_{amp,phase,freq}_{mean,var,skew,kurt}`       |
//! | cumulants | 7     | `cum_c20_abs … cum_c42_norm`                      |
//! | spectral  | 5     | `spec_{centroid,spread,flatness,papr,obw_frac}`   |

pub mod cumulants;
pub mod moments;
pub mod spectral;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::domain::{Band, Domain};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::signal::FrameSet;

pub use cumulants::{cumulants, Cumulants, CUMULANT_NAMES};
pub use moments::{moments, MomentFeatures, MOMENT_NAMES};
pub use spectral::{spectral, SpectralFeatures, SPECTRAL_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Moments,
    Cumulants,
    Spectral,
}

impl FeatureGroup {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureGroup::Moments => &MOMENT_NAMES,
            FeatureGroup::Cumulants => &CUMULANT_NAMES,
            FeatureGroup::Spectral => &SPECTRAL_NAMES,
        }
    }

    pub fn width(self) -> usize {
        self.names().len()
    }
}

/// Enabled feature groups, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureGroup>", into = "Vec<FeatureGroup>")]
pub struct FeatureSpec {
    groups: Vec<FeatureGroup>,
}

impl FeatureSpec {
    pub fn new(mut groups: Vec<FeatureGroup>) -> Result<Self> {
        groups.sort();
        groups.dedup();
        if groups.is_empty() {
            return Err(Error::invalid("feature spec needs at least one group"));
        }
        Ok(FeatureSpec { groups })
    }

    pub fn all() -> Self {
        FeatureSpec {
            groups: vec![
                FeatureGroup::Moments,
                FeatureGroup::Cumulants,
                FeatureGroup::Spectral,
            ],
        }
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.groups.iter().map(|g| g.width()).sum()
    }

    pub fn names(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| g.names().iter().map(|s| s.to_string()))
            .collect()
    }
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self::all()
    }
}

impl TryFrom<Vec<FeatureGroup>> for FeatureSpec {
    type Error = Error;

    fn try_from(groups: Vec<FeatureGroup>) -> Result<Self> {
        FeatureSpec::new(groups)
    }
}

impl From<FeatureSpec> for Vec<FeatureGroup> {
    fn from(spec: FeatureSpec) -> Self {
        spec.groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFlag {
    /// Amplitude variance under the floor; amplitude skew/kurtosis set to 0.
    ConstantAmplitude,
    /// Near-zero power; normalized cumulants set to 0.
    Silent,
    /// All-zero frame; spectral features set to 0.
    ZeroSpectrum,
}

/// Per-frame degenerate-input notes collected during extraction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityReport {
    pub flags: Vec<(usize, FrameFlag)>,
}

impl QualityReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self, flag: FrameFlag) -> usize {
        self.flags.iter().filter(|(_, f)| *f == flag).count()
    }
}

/// Row-per-frame feature values with labels and domain tags carried over.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub values: Matrix,
    pub labels: Vec<usize>,
    pub domains: Vec<Domain>,
}

impl FeatureMatrix {
    /// Converts to a single-domain dataset; fails on mixed domains.
    pub fn into_dataset(self, band: Option<Band>) -> Result<Dataset> {
        let domain = *self
            .domains
            .first()
            .ok_or_else(|| Error::invalid("cannot build a dataset from zero frames"))?;
        if self.domains.iter().any(|d| *d != domain) {
            return Err(Error::invalid("frames span more than one channel domain"));
        }
        Dataset::new(self.names, self.values, self.labels, domain, band)
    }
}

fn frame_features(
    samples: &[num_complex::Complex64],
    spec: &FeatureSpec,
    planner: &mut FftPlanner<f64>,
) -> Result<(Vec<f64>, Vec<FrameFlag>)> {
    let mut values = Vec::with_capacity(spec.dim());
    let mut flags = Vec::new();
    for group in spec.groups() {
        match group {
            FeatureGroup::Moments => {
                let m = moments(samples)?;
                if m.constant_amplitude {
                    flags.push(FrameFlag::ConstantAmplitude);
                }
                values.extend_from_slice(&m.values);
            }
            FeatureGroup::Cumulants => {
                let c = cumulants(samples)?;
                if c.silent {
                    flags.push(FrameFlag::Silent);
                }
                values.extend_from_slice(&c.features());
            }
            FeatureGroup::Spectral => {
                let s = spectral::spectral_with(samples, planner)?;
                if s.all_zero {
                    flags.push(FrameFlag::ZeroSpectrum);
                }
                values.extend_from_slice(&s.values());
            }
        }
    }
    Ok((values, flags))
}

/// Feature values of a single frame.
pub fn extract_frame(samples: &[num_complex::Complex64], spec: &FeatureSpec) -> Result<Vec<f64>> {
    Ok(frame_features(samples, spec, &mut FftPlanner::new())?.0)
}

/// Extracts one feature row per frame, preserving frame order.
///
/// Degenerate frames are flagged in the report rather than aborting. Hard
/// errors (frames too short for the moment estimators) still fail the call.
pub fn extract(frames: &FrameSet, spec: &FeatureSpec) -> Result<(FeatureMatrix, QualityReport)> {
    let rows: Vec<Result<(Vec<f64>, Vec<FrameFlag>)>> = frames
        .frames
        .par_iter()
        .map_init(FftPlanner::new, |planner, f| {
            frame_features(&f.samples, spec, planner)
        })
        .collect();

    let mut data = Vec::with_capacity(frames.len() * spec.dim());
    let mut report = QualityReport::default();
    for (i, row) in rows.into_iter().enumerate() {
        let (values, flags) = row?;
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::State(format!(
                "non-finite feature {} in frame {i}",
                spec.names()[j]
            )));
        }
        data.extend(values);
        report.flags.extend(flags.into_iter().map(|f| (i, f)));
    }
    let values = Matrix::from_vec(frames.len(), spec.dim(), data)?;
    Ok((
        FeatureMatrix {
            names: spec.names(),
            values,
            labels: frames.frames.iter().map(|f| f.label.index()).collect(),
            domains: frames.frames.iter().map(|f| f.domain).collect(),
        },
        report,
    ))
}
