use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature standardization fitted on one (source) dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    /// Population (1/n) standard deviations.
    pub stds: Vec<f64>,
    pub fitted_on: Option<Domain>,
    pub std_floor: f64,
}

impl Default for StandardScaler {
    fn default() -> Self {
        StandardScaler {
            means: Vec::new(),
            stds: Vec::new(),
            fitted_on: None,
            std_floor: STD_FLOOR,
        }
    }
}

impl StandardScaler {
    pub fn is_fitted(&self) -> bool {
        self.fitted_on.is_some()
    }

    pub fn fit(&mut self, ds: &Dataset) -> Result<()> {
        if self.is_fitted() {
            return Err(Error::State("scaler is already fitted".into()));
        }
        if ds.is_empty() {
            return Err(Error::invalid("cannot fit a scaler on an empty dataset"));
        }
        let (n, d) = ds.features.shape();
        let x = &ds.features;
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for j in 0..d {
            let first = x.get(0, j);
            if (0..n).all(|i| x.get(i, j) == first) {
                // Exact mean for constant columns so they transform to zeros.
                means[j] = first;
                continue;
            }
            let mut mean = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
            mean += (0..n).map(|i| x.get(i, j) - mean).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
            means[j] = mean;
            stds[j] = var.sqrt();
        }
        self.means = means;
        self.stds = stds;
        self.fitted_on = Some(ds.domain);
        Ok(())
    }

    fn check(&self, width: usize) -> Result<()> {
        if !self.is_fitted() {
            return Err(Error::State("scaler used before fit".into()));
        }
        if width != self.means.len() {
            return Err(Error::shape(
                "StandardScaler",
                format!("fitted on {} features, got {width}", self.means.len()),
            ));
        }
        Ok(())
    }

    pub fn transform_matrix(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x.cols())?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j].max(self.std_floor);
            }
        }
        Ok(out)
    }

    pub fn inverse_transform_matrix(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x.cols())?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.stds[j].max(self.std_floor) + self.means[j];
            }
        }
        Ok(out)
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        ds.with_features(self.transform_matrix(&ds.features)?)
    }
}

/// Fits a fresh scaler on `source`.
pub fn fit_scaler(source: &Dataset) -> Result<StandardScaler> {
    let mut s = StandardScaler::default();
    s.fit(source)?;
    Ok(s)
}
