use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::domain::{Modulation, NUM_CLASSES};
use crate::error::{Error, Result};

pub const SOURCE_TRAIN_FRACTION: f64 = 0.8;

/// Partition indices for one (source, target) pair. Every index set is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub source_train: Vec<usize>,
    pub source_val: Vec<usize>,
    /// Target rows used for adaptation; their labels never reach the optimizer.
    pub target_unlabeled: Vec<usize>,
    pub target_eval: Vec<usize>,
    pub seed: u64,
}

/// Stratified 80/20 source split and 50/50 target split.
///
/// Within each target class the rows are halved; the odd rows left over are
/// pooled and shared out so the unlabeled partition gets the extra one when the
/// target size is odd.
pub fn make_splits(source: &Dataset, target: &Dataset, seed: u64) -> Result<SplitPlan> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("splits need non-empty source and target"));
    }
    let counts = source.class_counts();
    if let Some(missing) = (0..NUM_CLASSES).find(|&c| counts[c] == 0) {
        return Err(Error::invalid(format!(
            "class {} absent from the source dataset",
            Modulation::ALL[missing].name()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(10);
    let mut source_train = Vec::new();
    let mut source_val = Vec::new();
    for mut idx in source.class_indices() {
        idx.shuffle(&mut rng);
        let n_train = (idx.len() as f64 * SOURCE_TRAIN_FRACTION).round() as usize;
        source_val.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        source_train.extend(idx);
    }

    rng.set_stream(11);
    let mut target_unlabeled = Vec::new();
    let mut target_eval = Vec::new();
    let mut leftovers = Vec::new();
    for mut idx in target.class_indices() {
        idx.shuffle(&mut rng);
        if idx.len() % 2 == 1 {
            leftovers.push(idx.pop().expect("odd length is non-empty"));
        }
        let half = idx.len() / 2;
        target_eval.extend_from_slice(&idx[half..]);
        idx.truncate(half);
        target_unlabeled.extend(idx);
    }
    leftovers.shuffle(&mut rng);
    let extra = leftovers.len().div_ceil(2);
    target_eval.extend_from_slice(&leftovers[extra..]);
    leftovers.truncate(extra);
    target_unlabeled.extend(leftovers);

    for v in [
        &mut source_train,
        &mut source_val,
        &mut target_unlabeled,
        &mut target_eval,
    ] {
        v.sort_unstable();
    }
    Ok(SplitPlan {
        source_train,
        source_val,
        target_unlabeled,
        target_eval,
        seed,
    })
}

/// The four partitions materialized as datasets.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub source_train: Dataset,
    pub source_val: Dataset,
    pub target_unlabeled: Dataset,
    pub target_eval: Dataset,
}

impl SplitPlan {
    pub fn apply(&self, source: &Dataset, target: &Dataset) -> SplitData {
        SplitData {
            source_train: source.subset(&self.source_train),
            source_val: source.subset(&self.source_val),
            target_unlabeled: target.subset(&self.target_unlabeled),
            target_eval: target.subset(&self.target_eval),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::nn::Matrix;

    fn balanced(n: usize, domain: Domain) -> Dataset {
        let labels = (0..n).map(|i| i % NUM_CLASSES).collect();
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::unnamed(x, labels, domain).unwrap()
    }

    #[test]
    fn source_thousand_is_stratified() {
        let s = balanced(1000, Domain::Rayleigh);
        let t = balanced(501, Domain::Rician);
        let plan = make_splits(&s, &t, 3).unwrap();
        assert_eq!((plan.source_train.len(), plan.source_val.len()), (800, 200));
        let tr = s.subset(&plan.source_train).class_counts();
        assert_eq!(tr, [160; 5]);
        assert_eq!(plan.target_unlabeled.len(), 251);
        assert_eq!(plan.target_eval.len(), 250);
        assert_eq!(plan, make_splits(&s, &t, 3).unwrap());
        assert_ne!(plan, make_splits(&s, &t, 4).unwrap());
    }

    #[test]
    fn missing_source_class_rejected() {
        let x = Matrix::zeros(4, 1);
        let s = Dataset::unnamed(x, vec![0, 1, 2, 3], Domain::Rayleigh).unwrap();
        assert!(make_splits(&s, &balanced(10, Domain::Rician), 0).is_err());
    }
}
