use rand::seq::SliceRandom;
use slicegan_tensor::rng::{derive_seed, seeded};

use super::sample::LabeledSample;
use crate::error::{Error, Result};
use crate::labels::Label;

/// Assignment of every sample to one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// `(train, validation)` sample indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Stratified, seeded partition. Each class is shuffled and dealt round
/// robin, the second class continuing where the first stopped so overall
/// fold sizes differ by at most one.
pub fn make_folds(samples: &[LabeledSample], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::contract(format!("need at least 2 folds, got {k}")));
    }
    if let Some(s) = samples.iter().find(|s| s.provenance.is_generated()) {
        return Err(Error::contract(format!("generated sample {} cannot enter a fold plan", s.id)));
    }
    let mut assignments = vec![0; samples.len()];
    let mut dealt = 0;
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == label).collect();
        if members.len() < k {
            return Err(Error::contract(format!(
                "class {label} has {} samples, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut seeded(derive_seed(seed, &[label.tag()])));
        for i in members {
            assignments[i] = dealt % k;
            dealt += 1;
        }
    }
    Ok(FoldPlan { k, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Provenance;

    fn samples(normal: usize, bipolar: usize) -> Vec<LabeledSample> {
        (0..normal + bipolar)
            .map(|i| LabeledSample {
                id: format!("s{i}"),
                dims: [1, 1, 1],
                values: vec![0.0],
                label: if i < normal { Label::Normal } else { Label::Bipolar },
                provenance: Provenance::Real,
            })
            .collect()
    }

    #[test]
    fn reference_cohort_fold_sizes() {
        let plan = make_folds(&samples(123, 49), 5, 3).unwrap();
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![35, 35, 34, 34, 34]);
    }

    #[test]
    fn small_class_and_generated_are_rejected() {
        assert!(matches!(make_folds(&samples(10, 3), 5, 0), Err(Error::Contract(_))));
        let mut s = samples(6, 6);
        s[2].provenance = Provenance::Generated;
        assert!(matches!(make_folds(&s, 5, 0), Err(Error::Contract(_))));
    }
}
