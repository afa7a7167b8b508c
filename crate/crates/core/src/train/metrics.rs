use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::models::Classifier;

/// Classification accuracy summary on one labeled split. Accuracies are percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when the class has no samples in the evaluated split.
    pub per_class_acc: [Option<f64>; NUM_CLASSES],
    /// Unweighted mean of the defined per-class accuracies.
    pub avg_acc: f64,
    pub overall_acc: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    /// Set when some class was absent and left out of `avg_acc`.
    pub missing_classes: bool,
    pub n: usize,
}

impl MetricsReport {
    pub fn from_predictions(labels: &[usize], predictions: &[usize]) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::shape(
                "metrics",
                format!("{} labels but {} predictions", labels.len(), predictions.len()),
            ));
        }
        if labels.is_empty() {
            return Err(Error::invalid("cannot score an empty split"));
        }
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        for (&y, &p) in labels.iter().zip(predictions) {
            if y >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(Error::invalid(format!("class index out of range: {y} / {p}")));
            }
            confusion[y][p] += 1;
        }
        let mut per_class_acc = [None; NUM_CLASSES];
        for (c, row) in confusion.iter().enumerate() {
            let total: usize = row.iter().sum();
            if total > 0 {
                per_class_acc[c] = Some(100.0 * row[c] as f64 / total as f64);
            }
        }
        let defined: Vec<f64> = per_class_acc.iter().flatten().copied().collect();
        let avg_acc = defined.iter().sum::<f64>() / defined.len() as f64;
        let correct: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        Ok(MetricsReport {
            per_class_acc,
            avg_acc,
            overall_acc: 100.0 * correct as f64 / labels.len() as f64,
            confusion,
            missing_classes: defined.len() < NUM_CLASSES,
            n: labels.len(),
        })
    }
}

/// Scores a model (eval mode) on a labeled split.
pub fn evaluate<M: Classifier + ?Sized>(model: &mut M, ds: &Dataset) -> Result<MetricsReport> {
    let predictions = model.predict(&ds.features)?;
    MetricsReport::from_predictions(&ds.labels, &predictions)
}

/// Plain accuracy in percent.
pub fn accuracy<M: Classifier + ?Sized>(model: &mut M, ds: &Dataset) -> Result<f64> {
    let predictions = model.predict(&ds.features)?;
    let correct = predictions.iter().zip(&ds.labels).filter(|(p, y)| p == y).count();
    Ok(100.0 * correct as f64 / ds.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub absolute: f64,
    /// Relative gain in percent; `None` when the baseline is 0.
    pub percent: Option<f64>,
}

/// DANN minus baseline, absolute and relative to the baseline.
pub fn improvement(baseline: f64, dann: f64) -> Improvement {
    let absolute = dann - baseline;
    let percent = if baseline > 0.0 {
        Some(100.0 * absolute / baseline)
    } else {
        log::warn!("baseline accuracy {baseline} leaves the relative improvement undefined");
        None
    };
    Improvement { absolute, percent }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let m = MetricsReport::from_predictions(&y, &y).unwrap();
        assert_eq!(m.overall_acc, 100.0);
        assert_eq!(m.avg_acc, 100.0);
        assert!(m.per_class_acc.iter().all(|a| *a == Some(100.0)));
        for c in 0..5 {
            assert_eq!(m.confusion[c][c], 10);
        }
    }

    #[test]
    fn absent_class_is_flagged() {
        let y = [0, 0, 1, 1];
        let p = [0, 1, 1, 1];
        let m = MetricsReport::from_predictions(&y, &p).unwrap();
        assert!(m.missing_classes);
        assert_eq!(m.per_class_acc[2], None);
        assert_eq!(m.avg_acc, 75.0);
        assert_eq!(m.overall_acc, 75.0);
    }

    #[test]
    fn improvement_cases() {
        let i = improvement(50.0, 50.0);
        assert_eq!((i.absolute, i.percent), (0.0, Some(0.0)));
        assert_eq!(improvement(0.0, 10.0).percent, None);
    }
}
