//! Batch normalization over every axis except the trailing channel axis.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    /// Weight of the current batch in the running-statistics update.
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }
}

/// Running statistics used in inference mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BatchNormStats<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// Values saved by the training-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub fn check_input(shape: &[usize], channels: usize, training: bool) -> Result<()> {
    if shape.len() < 2 || *shape.last().unwrap() != channels {
        return Err(TensorError::mismatch(
            "batchnorm",
            format!("input {shape:?} does not end in {channels} channels"),
        ));
    }
    if training && shape[0] < 2 {
        return Err(TensorError::DegenerateBatch(shape[0]));
    }
    Ok(())
}

/// Training-mode forward. Updates `stats` with the batch moments (unbiased
/// variance) and returns the output plus the backward cache.
pub fn forward_train<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    stats: &mut BatchNormStats<T>,
    cfg: BatchNormConfig,
) -> (Vec<T>, BatchNormCache<T>) {
    let c = gamma.len();
    let rows = x.len() / c;
    let n = T::lit(rows as f64);
    let mut mean = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            *s = *s + (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s = *s / n);
    let eps = T::lit(cfg.epsilon);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for ((xr, hr), or) in x.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(out.chunks_exact_mut(c)) {
        for j in 0..c {
            hr[j] = (xr[j] - mean[j]) * inv_std[j];
            or[j] = gamma[j] * hr[j] + beta[j];
        }
    }

    let mom = T::lit(cfg.momentum);
    let unbias = if rows > 1 { n / (n - T::one()) } else { T::one() };
    for j in 0..c {
        stats.mean[j] = (T::one() - mom) * stats.mean[j] + mom * mean[j];
        stats.var[j] = (T::one() - mom) * stats.var[j] + mom * var[j] * unbias;
    }
    (out, BatchNormCache { xhat, inv_std })
}

pub fn forward_infer<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    stats: &BatchNormStats<T>,
    cfg: BatchNormConfig,
) -> Vec<T> {
    let c = gamma.len();
    let eps = T::lit(cfg.epsilon);
    let scale: Vec<T> = (0..c).map(|j| gamma[j] / (stats.var[j] + eps).sqrt()).collect();
    let mut out = x.to_vec();
    for row in out.chunks_exact_mut(c) {
        for j in 0..c {
            row[j] = (row[j] - stats.mean[j]) * scale[j] + beta[j];
        }
    }
    out
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn backward_train<T: Scalar>(
    dout: &[T],
    gamma: &[T],
    cache: &BatchNormCache<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let n = T::lit((dout.len() / c) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (dr, hr) in dout.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for j in 0..c {
            dgamma[j] = dgamma[j] + dr[j] * hr[j];
            dbeta[j] = dbeta[j] + dr[j];
        }
    }
    // dx = gamma * inv_std / n * (n * dy - sum(dy) - xhat * sum(dy * xhat))
    let mut dx = vec![T::zero(); dout.len()];
    for ((xr, dr), hr) in dx.chunks_exact_mut(c).zip(dout.chunks_exact(c)).zip(cache.xhat.chunks_exact(c)) {
        for j in 0..c {
            let k = gamma[j] * cache.inv_std[j] / n;
            xr[j] = k * (n * dr[j] - dbeta[j] - hr[j] * dgamma[j]);
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_batch_maps_to_plus_minus_one() {
        let mut stats = BatchNormStats::new(1);
        let cfg = BatchNormConfig { momentum: 0.1, epsilon: 1e-12 };
        let (out, _) = forward_train(&[0.0f64, 2.0], &[1.0], &[0.0], &mut stats, cfg);
        assert!((out[0] + 1.0).abs() < 1e-9 && (out[1] - 1.0).abs() < 1e-9);
        // running stats: mean 0.1 * 1, var 0.9 + 0.1 * 2 (unbiased of {0,2})
        assert!((stats.mean[0] - 0.1).abs() < 1e-12);
        assert!((stats.var[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let mut stats = BatchNormStats::new(2);
        let (out, _) = forward_train(&[3.0f32; 8], &[1.0, 1.0], &[0.0, 0.0], &mut stats, BatchNormConfig::default());
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sample_batch_is_degenerate_in_training() {
        assert_eq!(check_input(&[1, 4, 3], 3, true), Err(TensorError::DegenerateBatch(1)));
        assert!(check_input(&[1, 4, 3], 3, false).is_ok());
    }
}
