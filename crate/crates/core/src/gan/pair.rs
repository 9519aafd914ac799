use rand::seq::index::sample;
use rand::Rng;
use slicegan_tensor::rng::{derive_seed, seeded};
use slicegan_tensor::{Tape, Tensor};

use super::config::GanTrainConfig;
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::network::{ForwardOptions, ModelGraph, ModelOptimizer};

/// Fixed-noise generation recorded after an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    /// `side x side`, row-major.
    pub image: Vec<f32>,
}

/// A trained generator/discriminator for one class and depth slice.
#[derive(Clone, Debug)]
pub struct GanPair {
    pub label: Label,
    pub depth_index: usize,
    pub generator: ModelGraph,
    pub discriminator: ModelGraph,
    pub epoch: usize,
    /// `(g_loss, d_loss)` per epoch.
    pub loss_history: Vec<(f64, f64)>,
    pub snapshots: Vec<Snapshot>,
    /// `[1, noise_dim]`, reused for every snapshot.
    pub fixed_noise: Tensor<f32>,
}

// Stream tags for seed derivation.
const GEN_INIT: u64 = 1;
const DISC_INIT: u64 = 2;
const FIXED_NOISE: u64 = 3;
const EPOCH: u64 = 4;

fn noise(batch: usize, dim: usize, seed: u64) -> Result<Tensor<f32>> {
    Ok(Tensor::randn_seeded(vec![batch, dim], seed)?)
}

impl GanPair {
    pub fn side(&self) -> usize {
        self.generator.output_shape()[0]
    }

    pub fn noise_dim(&self) -> usize {
        self.generator.input_shape()[0]
    }

    /// Inference-mode generator output for `z: [n, noise_dim]`.
    pub fn generate_from(&self, z: Tensor<f32>) -> Result<Vec<Vec<f32>>> {
        let px = self.side() * self.side();
        let out = self.generator.predict_batch(z)?;
        Ok(out.data().chunks(px).map(<[f32]>::to_vec).collect())
    }

    /// `n` slices from fresh noise.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<Vec<f32>>> {
        self.generate_from(noise(n, self.noise_dim(), seed)?)
    }

    pub fn snapshot_image(&self) -> Result<Vec<f32>> {
        Ok(self.generate_from(self.fixed_noise.clone())?.remove(0))
    }

    /// Inference-mode real probabilities for a set of slices.
    pub fn discriminate(&self, slices: &[Vec<f32>]) -> Result<Vec<f64>> {
        let s = self.side();
        let data: Vec<f32> = slices.iter().flatten().copied().collect();
        let x = Tensor::new(vec![slices.len(), s, s, 1], data)?;
        Ok(self.discriminator.predict_batch(x)?.data().iter().map(|&p| p as f64).collect())
    }

    /// Accuracy of the discriminator on `real` plus as many generated
    /// slices, thresholding at 0.5.
    pub fn discriminator_accuracy(&self, real: &[Vec<f32>], seed: u64) -> Result<f64> {
        let fake = self.generate(real.len(), seed)?;
        let hits = self.discriminate(real)?.iter().filter(|&&p| p >= 0.5).count()
            + self.discriminate(&fake)?.iter().filter(|&&p| p < 0.5).count();
        Ok(hits as f64 / (2 * real.len()) as f64)
    }
}

fn check_slices(slices: &[Vec<f32>], side: usize) -> Result<()> {
    if slices.len() < 2 {
        return Err(Error::contract(format!(
            "a slice GAN needs at least 2 training slices, got {}",
            slices.len()
        )));
    }
    let px = side * side;
    for (i, s) in slices.iter().enumerate() {
        if s.len() != px {
            return Err(Error::Shape(format!("slice {i} has {} pixels, expected {px}", s.len())));
        }
        if s.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::contract(format!("slice {i} has values outside [-1, 1]")));
        }
    }
    Ok(())
}

/// Trains one pair with the non-saturating binary cross-entropy objective.
/// Each epoch draws one real batch, takes `d_steps` discriminator updates
/// (real target 1, generated target 0) and `g_steps` generator updates
/// (discriminator output on generated slices pushed toward 1).
pub fn train_slice_gan(slices: &[Vec<f32>], cfg: &GanTrainConfig, label: Label, depth_index: usize) -> Result<GanPair> {
    cfg.validate()?;
    let side = cfg.arch.image_side;
    check_slices(slices, side)?;
    let seed = cfg.seed;
    let mut generator = cfg.arch.generator()?.initialized(derive_seed(seed, &[GEN_INIT]))?;
    let mut discriminator = cfg.arch.discriminator()?.initialized(derive_seed(seed, &[DISC_INIT]))?;
    let mut g_opt = ModelOptimizer::new(&mut generator, cfg.adam());
    let mut d_opt = ModelOptimizer::new(&mut discriminator, cfg.adam());
    let mut pair = GanPair {
        label,
        depth_index,
        fixed_noise: noise(1, cfg.arch.noise_dim, derive_seed(seed, &[FIXED_NOISE]))?,
        generator,
        discriminator,
        epoch: 0,
        loss_history: Vec::new(),
        snapshots: Vec::new(),
    };

    let b = cfg.batch_size;
    let px = side * side;
    let targets: Vec<f32> = (0..2 * b).map(|i| if i < b { 1.0 } else { 0.0 }).collect();
    let ones = vec![1.0f32; b];
    for epoch in 1..=cfg.trained_epochs() {
        let epoch_seed = derive_seed(seed, &[EPOCH, epoch as u64]);
        let mut rng = seeded(epoch_seed);
        let picks: Vec<usize> = if slices.len() >= b {
            sample(&mut rng, slices.len(), b).into_vec()
        } else {
            (0..b).map(|_| rng.gen_range(0..slices.len())).collect()
        };
        let mut real = Vec::with_capacity(2 * b * px);
        for &i in &picks {
            real.extend_from_slice(&slices[i]);
        }

        let mut d_loss = 0.0;
        for step in 0..cfg.d_steps {
            let step_seed = derive_seed(epoch_seed, &[0, step as u64]);
            let z = noise(b, cfg.arch.noise_dim, derive_seed(step_seed, &[0]))?;
            let fake = {
                let mut tape = Tape::new();
                let zv = tape.leaf(&z);
                let opts = ForwardOptions {
                    trainable: false,
                    logits: false,
                    ..ForwardOptions::training(step_seed)
                };
                let pass = pair.generator.forward(&mut tape, zv, opts)?;
                tape.tensor(pass.output).into_data()
            };
            let mut x = real.clone();
            x.extend_from_slice(&fake);
            let mut tape = Tape::new();
            let xv = tape.constant(vec![2 * b, side, side, 1], x)?;
            let pass = pair
                .discriminator
                .forward(&mut tape, xv, ForwardOptions::training(derive_seed(step_seed, &[1])))?;
            let loss = tape.bce_with_logits(pass.output, &targets)?;
            let value = tape.scalar(loss).unwrap_or(f32::NAN) as f64;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: "discriminator loss",
                });
            }
            tape.backward(loss)?;
            pair.discriminator.store_grads(&tape, &pass)?;
            d_opt.step(&mut pair.discriminator)?;
            d_loss += value;
        }

        let mut g_loss = 0.0;
        for step in 0..cfg.g_steps {
            let step_seed = derive_seed(epoch_seed, &[1, step as u64]);
            let z = noise(b, cfg.arch.noise_dim, derive_seed(step_seed, &[0]))?;
            let mut tape = Tape::new();
            let zv = tape.leaf(&z);
            let g_pass = pair.generator.forward(
                &mut tape,
                zv,
                ForwardOptions {
                    logits: false,
                    ..ForwardOptions::training(step_seed)
                },
            )?;
            let d_pass = pair.discriminator.forward(
                &mut tape,
                g_pass.output,
                ForwardOptions {
                    trainable: false,
                    ..ForwardOptions::training(derive_seed(step_seed, &[1]))
                },
            )?;
            let loss = tape.bce_with_logits(d_pass.output, &ones)?;
            let value = tape.scalar(loss).unwrap_or(f32::NAN) as f64;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: "generator loss",
                });
            }
            tape.backward(loss)?;
            pair.generator.store_grads(&tape, &g_pass)?;
            pair.generator.commit_batchnorm(&g_pass);
            g_opt.step(&mut pair.generator)?;
            g_loss += value;
        }

        pair.epoch = epoch;
        pair.loss_history
            .push((g_loss / cfg.g_steps as f64, d_loss / cfg.d_steps as f64));
        if cfg.snapshot_epochs.contains(&epoch) {
            let image = pair.snapshot_image()?;
            pair.snapshots.push(Snapshot { epoch, image });
        }
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::GanArch;

    fn tiny() -> GanTrainConfig {
        GanTrainConfig {
            max_epochs: 6,
            early_stop_epoch: Some(4),
            batch_size: 4,
            snapshot_epochs: vec![1, 3, 6],
            arch: GanArch {
                noise_dim: 4,
                dense_units: 8,
                image_side: 8,
                reshape_channels: 4,
                mid_channels: 4,
                kernel: 3,
                disc_filters: [4, 4],
                disc_dense: [8, 8],
                leaky_alpha: 0.2,
                dropout: 0.3,
            },
            ..GanTrainConfig::desk()
        }
    }

    fn data(n: usize) -> Vec<Vec<f32>> {
        (0..n).map(|i| (0..64).map(|p| ((p + i) % 7) as f32 / 7.0 - 0.5).collect()).collect()
    }

    #[test]
    fn early_stop_caps_history_and_snapshots() {
        let pair = train_slice_gan(&data(5), &tiny(), Label::Normal, 3).unwrap();
        assert_eq!(pair.epoch, 4);
        assert_eq!(pair.loss_history.len(), 4);
        assert_eq!(pair.snapshots.iter().map(|s| s.epoch).collect::<Vec<_>>(), vec![1, 3]);
        assert!(pair.snapshots[0].image.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_slice_gan(&data(3), &tiny(), Label::Bipolar, 0).unwrap();
        let b = train_slice_gan(&data(3), &tiny(), Label::Bipolar, 0).unwrap();
        assert_eq!(a.generator.params(), b.generator.params());
        assert_eq!(a.discriminator.params(), b.discriminator.params());
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn contract_errors() {
        assert!(matches!(
            train_slice_gan(&data(1), &tiny(), Label::Normal, 0),
            Err(Error::Contract(_))
        ));
        let mut bad = data(2);
        bad[1][0] = 3.0;
        assert!(train_slice_gan(&bad, &tiny(), Label::Normal, 0).is_err());
        assert!(train_slice_gan(&[vec![0.0; 4], vec![0.0; 4]], &tiny(), Label::Normal, 0).is_err());
    }

    #[test]
    fn divergence_reports_the_epoch() {
        let cfg = GanTrainConfig {
            learning_rate: 1e30,
            ..tiny()
        };
        match train_slice_gan(&data(4), &cfg, Label::Normal, 0) {
            Err(Error::Divergence { epoch, .. }) => assert!((1..=4).contains(&epoch)),
            Ok(_) => panic!("training with an absurd learning rate must diverge"),
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
