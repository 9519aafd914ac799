use crate::error::{Result, TensorError};
use crate::rng;
use crate::scalar::Scalar;

/// Dense row-major tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(TensorError::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("dimension {pos} is zero"),
        });
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(TensorError::InvalidShape {
                shape,
                reason: format!("holds {len} elements but {} were given", data.len()),
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        Tensor::new(shape, vec![value; len])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::full(shape, T::zero())
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Standard-normal samples; the same `(shape, seed)` always yields the
    /// same bits.
    pub fn randn_seeded(shape: impl Into<Vec<usize>>, seed: u64) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() {
            return Err(TensorError::InvalidShape {
                shape,
                reason: "randn needs at least one dimension".into(),
            });
        }
        let len = check_shape(&shape)?;
        let mut rng = rng::seeded(seed);
        let data = (0..len).map(|_| T::lit(rng::standard_normal(&mut rng))).collect();
        Tensor::new(shape, data)
    }

    /// Normal samples with the given standard deviation, redrawn until they
    /// fall within two standard deviations.
    pub fn truncated_normal(shape: impl Into<Vec<usize>>, std: f64, seed: u64) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        let mut rng = rng::seeded(seed);
        let data = (0..len)
            .map(|_| loop {
                let z = rng::standard_normal(&mut rng);
                if z.abs() <= 2.0 {
                    break T::lit(z * std);
                }
            })
            .collect();
        Tensor::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(TensorError::mismatch(
                "set_grad",
                format!("gradient of length {} for tensor of length {}", grad.len(), self.data.len()),
            ));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Same data viewed under a new shape with the same element count.
    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if len != self.data.len() {
            return Err(TensorError::mismatch(
                "reshape",
                format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan))
                .collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn randn_is_deterministic() {
        let a = Tensor::<f32>::randn_seeded([2, 2], 7).unwrap();
        let b = Tensor::<f32>::randn_seeded([2, 2], 7).unwrap();
        assert_eq!(a.data(), b.data());
        let c = Tensor::<f32>::randn_seeded([2, 2], 8).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn randn_moments() {
        let t = Tensor::<f64>::randn_seeded([10_000], 1).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!(var > 0.9 && var < 1.1, "var {var}");
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(
            Tensor::<f32>::randn_seeded([0], 1),
            Err(TensorError::InvalidShape { .. })
        ));
        assert!(matches!(
            Tensor::<f32>::randn_seeded(Vec::new(), 1),
            Err(TensorError::InvalidShape { .. })
        ));
        assert!(Tensor::<f32>::new([2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn truncated_normal_stays_within_two_sigma() {
        let t = Tensor::<f32>::truncated_normal([4096], 0.02, 3).unwrap();
        assert!(t.data().iter().all(|v| v.abs() <= 0.04 + 1e-7));
    }

    #[test]
    fn grad_length_is_checked() {
        let mut t = Tensor::<f32>::zeros([3]).unwrap();
        assert!(t.set_grad(vec![0.0; 2]).is_err());
        t.set_grad(vec![1.0; 3]).unwrap();
        assert_eq!(t.grad(), Some(&[1.0, 1.0, 1.0][..]));
    }
}
