use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slicegan_tensor::rng::derive_seed;

use super::config::GanTrainConfig;
use super::pair::{train_slice_gan, GanPair};
use crate::error::{Error, Result};
use crate::labels::{Label, Provenance};
use crate::network::{checkpoint, GanArch};
use crate::volume::SliceStack;

/// Trained pairs keyed by `(class, band position)`.
#[derive(Clone, Debug)]
pub struct GanBank {
    pub arch: GanArch,
    /// Source depth of every band position.
    pub depth_indices: Vec<usize>,
    pub pairs: BTreeMap<(Label, usize), GanPair>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankIndex {
    arch: GanArch,
    depth_indices: Vec<usize>,
    classes: Vec<Label>,
}

fn checkpoint_name(label: Label, depth: usize, role: &str) -> String {
    format!("{label}_d{depth:02}_{role}.ckpt")
}

impl GanBank {
    pub fn depth_count(&self) -> usize {
        self.depth_indices.len()
    }

    pub fn is_complete(&self, label: Label) -> bool {
        (0..self.depth_count()).all(|d| self.pairs.contains_key(&(label, d)))
    }

    /// Writes `bank.json` and one checkpoint per (class, depth, role).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut classes: Vec<Label> = self.pairs.keys().map(|k| k.0).collect();
        classes.dedup();
        let index = BankIndex {
            arch: self.arch.clone(),
            depth_indices: self.depth_indices.clone(),
            classes,
        };
        let path = dir.join("bank.json");
        let text = serde_json::to_string_pretty(&index).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        for (&(label, d), pair) in &self.pairs {
            checkpoint::save(&pair.generator, &dir.join(checkpoint_name(label, d, "generator")))?;
            checkpoint::save(&pair.discriminator, &dir.join(checkpoint_name(label, d, "discriminator")))?;
        }
        Ok(())
    }

    /// Restores the networks; training history is not stored.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bank.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: BankIndex =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut pairs = BTreeMap::new();
        for &label in &index.classes {
            for d in 0..index.depth_indices.len() {
                let mut generator = index.arch.generator()?;
                checkpoint::load(&mut generator, &dir.join(checkpoint_name(label, d, "generator")))?;
                let mut discriminator = index.arch.discriminator()?;
                checkpoint::load(&mut discriminator, &dir.join(checkpoint_name(label, d, "discriminator")))?;
                let fixed_noise = slicegan_tensor::Tensor::zeros(vec![1, index.arch.noise_dim])?;
                pairs.insert(
                    (label, d),
                    GanPair {
                        label,
                        depth_index: d,
                        generator,
                        discriminator,
                        epoch: 0,
                        loss_history: Vec::new(),
                        snapshots: Vec::new(),
                        fixed_noise,
                    },
                );
            }
        }
        Ok(GanBank {
            arch: index.arch,
            depth_indices: index.depth_indices,
            pairs,
        })
    }
}

/// Seed of the pair for `label` at band position `depth`.
pub fn pair_seed(seed: u64, label: Label, depth: usize) -> u64 {
    derive_seed(seed, &[label.tag(), depth as u64])
}

/// Trains one pair per class and band position on up to `jobs` threads.
/// Every pair sees only the slices of its own class and position, and its
/// seed depends only on the configuration seed, class and position.
pub fn train_gan_bank(stacks: &[SliceStack], cfg: &GanTrainConfig, jobs: usize) -> Result<GanBank> {
    cfg.validate()?;
    let first = stacks
        .first()
        .ok_or_else(|| Error::contract("no stacks to train a GAN bank on"))?;
    let side = cfg.arch.image_side;
    for s in stacks {
        if s.side != (side, side) || s.depth_indices != first.depth_indices {
            return Err(Error::Shape(format!(
                "every stack must be {side}x{side} over depths {:?}",
                first.depth_indices
            )));
        }
        if s.provenance.is_generated() {
            return Err(Error::contract("generated stacks cannot train a GAN bank"));
        }
    }
    let mut work = Vec::new();
    for label in Label::ALL {
        let class: Vec<&SliceStack> = stacks.iter().filter(|s| s.label == Some(label)).collect();
        if class.len() < 2 {
            return Err(Error::contract(format!(
                "class {label} has {} stacks, at least 2 are needed",
                class.len()
            )));
        }
        for d in 0..first.len() {
            let slices: Vec<Vec<f32>> = class.iter().map(|s| s.slices[d].clone()).collect();
            work.push((label, d, slices));
        }
    }
    let run = |(label, d, slices): &(Label, usize, Vec<Vec<f32>>)| {
        let pair_cfg = GanTrainConfig {
            seed: pair_seed(cfg.seed, *label, *d),
            ..cfg.clone()
        };
        log::debug!("training GAN for {label} depth {d}");
        train_slice_gan(slices, &pair_cfg, *label, *d)
    };
    let trained: Vec<GanPair> = if jobs <= 1 {
        work.iter().map(run).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| work.par_iter().map(run).collect::<Result<_>>())?
    };
    Ok(GanBank {
        arch: cfg.arch.clone(),
        depth_indices: first.depth_indices.clone(),
        pairs: trained.into_iter().map(|p| ((p.label, p.depth_index), p)).collect(),
    })
}

/// One generated stack for `label`: a fresh noise draw per band position,
/// seeded from `seed` and the position.
pub fn synthesize_stack(bank: &GanBank, label: Label, seed: u64) -> Result<SliceStack> {
    if bank.depth_count() == 0 || !bank.is_complete(label) {
        return Err(Error::contract(format!("GAN bank is incomplete for class {label}")));
    }
    let side = bank.arch.image_side;
    let slices = (0..bank.depth_count())
        .map(|d| {
            let mut s = bank.pairs[&(label, d)].generate(1, derive_seed(seed, &[d as u64]))?;
            Ok(s.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    SliceStack::new(
        (side, side),
        slices,
        bank.depth_indices.clone(),
        Some(label),
        Provenance::Generated,
    )
}
