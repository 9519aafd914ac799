use slicegan_tensor::{adam_step, AdamConfig, AdamState};

use super::graph::ModelGraph;
use crate::error::{Error, Result};

/// Adam over every trainable tensor of one model.
#[derive(Clone, Debug)]
pub struct ModelOptimizer {
    states: Vec<AdamState>,
}

impl ModelOptimizer {
    pub fn new(model: &mut ModelGraph, config: AdamConfig) -> Self {
        let states = model.trainable_mut().map(|t| AdamState::new(t.len(), config)).collect();
        ModelOptimizer { states }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step_count)
    }

    /// Applies the stored gradients and clears them. Tensors without a
    /// gradient are treated as having a zero gradient.
    pub fn step(&mut self, model: &mut ModelGraph) -> Result<()> {
        let tensors: Vec<_> = model.trainable_mut().collect();
        if tensors.len() != self.states.len() {
            return Err(Error::contract("optimizer built for a different model"));
        }
        for (t, state) in tensors.into_iter().zip(&mut self.states) {
            let grad = t.take_grad().unwrap_or_else(|| vec![0.0; t.len()]);
            adam_step(t.data_mut(), &grad, state)?;
        }
        Ok(())
    }
}
