use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use slicegan_tensor::rng::{derive_seed, seeded};
use slicegan_tensor::{AdamConfig, Tape, Tensor};

use super::sample::LabeledSample;
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::network::{ClassifierArch, ForwardOptions, ModelGraph, ModelOptimizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub arch: ClassifierArch,
    /// Derived from the run seed; never read from configuration files.
    #[serde(skip)]
    pub seed: u64,
}

impl ClassifierTrainConfig {
    /// 32x32x22 input, 100 epochs of batch 8.
    pub fn full() -> Self {
        let adam = AdamConfig::classifier();
        ClassifierTrainConfig {
            epochs: 100,
            batch_size: 8,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            arch: ClassifierArch::full(),
            seed: 0,
        }
    }

    /// 8x8x22 input.
    pub fn desk() -> Self {
        ClassifierTrainConfig {
            arch: ClassifierArch::desk(),
            ..ClassifierTrainConfig::full()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::classifier()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("classifier epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("adam hyperparameters out of range".into()));
        }
        Ok(())
    }
}

fn check_sample(model_input: &[usize], s: &LabeledSample) -> Result<()> {
    let expected = &model_input[..3];
    if s.dims[..] != *expected || s.values.len() != expected.iter().product::<usize>() {
        return Err(Error::Shape(format!(
            "sample {} is {:?}, the classifier expects {:?}",
            s.id, s.dims, expected
        )));
    }
    Ok(())
}

fn stack_batch(samples: &[&LabeledSample], input: &[usize]) -> Result<Tensor<f32>> {
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(input);
    let data = samples.iter().flat_map(|s| s.values.iter().copied()).collect();
    Ok(Tensor::new(shape, data)?)
}

/// Batches of at most `size`; a trailing batch of one is merged into the
/// previous one so batch statistics stay defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

/// Trains a fresh classifier and returns it with the mean training loss of
/// every epoch.
pub fn train_classifier_logged(train: &[LabeledSample], cfg: &ClassifierTrainConfig) -> Result<(ModelGraph, Vec<f64>)> {
    cfg.validate()?;
    for label in Label::ALL {
        if !train.iter().any(|s| s.label == label) {
            return Err(Error::contract(format!("training set has no {label} samples")));
        }
    }
    let mut model = cfg.arch.build()?.initialized(derive_seed(cfg.seed, &[0]))?;
    let input = model.input_shape().to_vec();
    for s in train {
        check_sample(&input, s)?;
    }
    let mut opt = ModelOptimizer::new(&mut model, cfg.adam());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let epoch_seed = derive_seed(cfg.seed, &[1, epoch as u64]);
        order.shuffle(&mut seeded(epoch_seed));
        let (mut total, mut seen) = (0.0, 0usize);
        for (b, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let members: Vec<&LabeledSample> = idx.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = members.iter().map(|s| s.label.class_index()).collect();
            let mut tape = Tape::new();
            let x = tape.leaf(&stack_batch(&members, &input)?);
            let pass = model.forward(&mut tape, x, ForwardOptions::training(derive_seed(epoch_seed, &[b as u64])))?;
            let loss = tape.softmax_cross_entropy(pass.output, &labels)?;
            let value = tape.scalar(loss).unwrap_or(f32::NAN) as f64;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    what: "classifier loss",
                });
            }
            tape.backward(loss)?;
            model.store_grads(&tape, &pass)?;
            model.commit_batchnorm(&pass);
            opt.step(&mut model)?;
            total += value * members.len() as f64;
            seen += members.len();
        }
        losses.push(total / seen as f64);
    }
    Ok((model, losses))
}

/// Softmax cross-entropy minimized with Adam; deterministic in `cfg.seed`.
pub fn train_classifier(train: &[LabeledSample], cfg: &ClassifierTrainConfig) -> Result<ModelGraph> {
    Ok(train_classifier_logged(train, cfg)?.0)
}

/// `[p(normal), p(bipolar)]` for each sample, in inference mode.
pub fn predict_many(model: &ModelGraph, samples: &[LabeledSample]) -> Result<Vec<[f64; 2]>> {
    let input = model.input_shape().to_vec();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        for s in chunk {
            check_sample(&input, s)?;
        }
        let refs: Vec<&LabeledSample> = chunk.iter().collect();
        let probs = model.predict_batch(stack_batch(&refs, &input)?)?;
        out.extend(probs.data().chunks(2).map(|p| [p[0] as f64, p[1] as f64]));
    }
    Ok(out)
}

pub fn predict(model: &ModelGraph, sample: &LabeledSample) -> Result<[f64; 2]> {
    Ok(predict_many(model, std::slice::from_ref(sample))?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order[..1], 4);
        assert_eq!(b.len(), 1);
        let b = batches(&order[..6], 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 2]);
    }
}
