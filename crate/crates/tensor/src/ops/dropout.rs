use crate::error::{Result, TensorError};
use crate::rng;
use crate::scalar::Scalar;

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::InvalidRate(rate));
    }
    Ok(())
}

/// Inverted-dropout multipliers: `0` with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn mask<T: Scalar>(len: usize, rate: f64, seed: u64) -> Result<Vec<T>> {
    check_rate(rate)?;
    let keep = T::lit(1.0 / (1.0 - rate));
    let mut rng = rng::seeded(seed);
    Ok((0..len)
        .map(|_| if rng::uniform(&mut rng) < rate { T::zero() } else { keep })
        .collect())
}
