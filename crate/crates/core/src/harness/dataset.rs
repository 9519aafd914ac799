use rand::seq::SliceRandom;
use slicegan_tensor::rng::{derive_seed, seeded};

use super::plan::Counts;
use crate::classifier::LabeledSample;
use crate::error::{Error, Result};
use crate::labels::{Label, Provenance};
use crate::volume::{preprocess_volume, resize_stack, Geometry, SliceStack, Volume};

/// One subject at both working resolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub label: Label,
    pub provenance: Provenance,
    /// GAN-side band of slices.
    pub gan_stack: SliceStack,
    /// Classifier-side sample.
    pub sample: LabeledSample,
}

impl Subject {
    pub fn from_volume(id: impl Into<String>, volume: &Volume, geometry: &Geometry) -> Result<Self> {
        let id = id.into();
        let label = volume
            .label
            .ok_or_else(|| Error::contract(format!("subject {id} has no label")))?;
        let gan_stack = preprocess_volume(volume, geometry)?;
        let sample = LabeledSample::from_stack(id.clone(), &resize_stack(&gan_stack, geometry.classifier_side)?)?;
        Ok(Subject {
            id,
            label,
            provenance: volume.provenance,
            gan_stack,
            sample,
        })
    }
}

/// Fixed train/test partition of the subjects.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Subject>,
    pub test: Vec<Subject>,
}

impl SplitDataset {
    fn count(subjects: &[Subject], label: Label) -> usize {
        subjects.iter().filter(|s| s.label == label).count()
    }

    pub fn train_counts(&self) -> Counts {
        (Self::count(&self.train, Label::Normal), Self::count(&self.train, Label::Bipolar))
    }

    pub fn test_counts(&self) -> Counts {
        (Self::count(&self.test, Label::Normal), Self::count(&self.test, Label::Bipolar))
    }

    pub fn class_totals(&self) -> Counts {
        let (a, b) = (self.train_counts(), self.test_counts());
        (a.0 + b.0, a.1 + b.1)
    }

    pub fn train_samples(&self) -> Vec<LabeledSample> {
        self.train.iter().map(|s| s.sample.clone()).collect()
    }

    pub fn test_samples(&self) -> Vec<LabeledSample> {
        self.test.iter().map(|s| s.sample.clone()).collect()
    }

    pub fn train_gan_stacks(&self) -> Vec<SliceStack> {
        self.train.iter().map(|s| s.gan_stack.clone()).collect()
    }
}

/// Test-set sizes keeping the reference cohort's per-class test fractions
/// (31 of 123 normal, 12 of 49 bipolar).
pub fn reference_test_counts(class_totals: Counts) -> Counts {
    let scale = |n: usize, test: f64, total: f64| (n as f64 * test / total).round() as usize;
    (scale(class_totals.0, 31.0, 123.0), scale(class_totals.1, 12.0, 49.0))
}

/// Seeded per-class draw of the test subjects; both sides keep input order.
pub fn split_dataset(subjects: Vec<Subject>, test: Counts, seed: u64) -> Result<SplitDataset> {
    if let Some(s) = subjects.iter().find(|s| s.provenance.is_generated()) {
        return Err(Error::contract(format!("generated subject {} cannot be split", s.id)));
    }
    let mut ids: Vec<&str> = subjects.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::contract("subject ids must be unique"));
    }
    let mut in_test = vec![false; subjects.len()];
    for (label, n_test) in [(Label::Normal, test.0), (Label::Bipolar, test.1)] {
        let mut members: Vec<usize> = (0..subjects.len()).filter(|&i| subjects[i].label == label).collect();
        if n_test >= members.len() {
            return Err(Error::contract(format!(
                "cannot hold out {n_test} of {} {label} subjects",
                members.len()
            )));
        }
        members.shuffle(&mut seeded(derive_seed(seed, &[label.tag()])));
        for &i in &members[..n_test] {
            in_test[i] = true;
        }
    }
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (s, t) in subjects.into_iter().zip(in_test) {
        if t {
            held.push(s);
        } else {
            train.push(s);
        }
    }
    Ok(SplitDataset { train, test: held })
}
