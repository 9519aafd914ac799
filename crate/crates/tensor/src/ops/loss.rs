//! Fused losses that take logits, so saturated probabilities never produce
//! `log(0)`.

use crate::scalar::Scalar;

/// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
pub fn bce_with_logits<T: Scalar>(logits: &[T], targets: &[T]) -> T {
    let n = T::lit(logits.len() as f64);
    logits
        .iter()
        .zip(targets)
        .map(|(&x, &t)| x.max(T::zero()) - x * t + (T::one() + (-x.abs()).exp()).ln())
        .sum::<T>()
        / n
}

pub fn bce_with_logits_grad<T: Scalar>(logits: &[T], targets: &[T]) -> Vec<T> {
    let n = T::lit(logits.len() as f64);
    logits
        .iter()
        .zip(targets)
        .map(|(&x, &t)| {
            let s = if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            };
            (s - t) / n
        })
        .collect()
}

/// Row-wise log-softmax of a `[rows, classes]` matrix.
pub fn log_softmax<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        row.iter_mut().for_each(|v| *v = *v - lse);
    }
    out
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`. Returns
/// the loss and the cached log-probabilities.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> (T, Vec<T>) {
    let logp = log_softmax(logits, classes);
    let n = T::lit(labels.len() as f64);
    let loss = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -logp[i * classes + l])
        .sum::<T>()
        / n;
    (loss, logp)
}

pub fn softmax_cross_entropy_grad<T: Scalar>(logp: &[T], labels: &[usize], classes: usize) -> Vec<T> {
    let n = T::lit(labels.len() as f64);
    let mut g: Vec<T> = logp.iter().map(|&v| v.exp() / n).collect();
    for (i, &l) in labels.iter().enumerate() {
        g[i * classes + l] = g[i * classes + l] - T::one() / n;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_zero_logit_is_ln_two() {
        let l = bce_with_logits(&[0.0f64, 0.0], &[1.0, 0.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_is_finite_for_extreme_logits() {
        let l = bce_with_logits(&[500.0f32, -500.0], &[0.0, 1.0]);
        assert!(l.is_finite());
        assert!((l - 500.0).abs() < 1e-3);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let (l, _) = softmax_cross_entropy(&[0.0f64, 0.0, 1.0, 1.0], &[0, 1], 2);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
