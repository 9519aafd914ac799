use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
    Tanh,
    /// Row-wise over the last axis.
    Softmax,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    /// `last` is the extent of the trailing axis (only used by softmax).
    pub fn forward<T: Scalar>(self, x: &[T], last: usize) -> Vec<T> {
        match self {
            Activation::Relu => x.iter().map(|&v| v.max(T::zero())).collect(),
            Activation::LeakyRelu { alpha } => {
                let a = T::lit(alpha);
                x.iter().map(|&v| if v > T::zero() { v } else { a * v }).collect()
            }
            Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => x.iter().map(|&v| v.tanh()).collect(),
            Activation::Softmax => {
                let mut out = x.to_vec();
                for row in out.chunks_exact_mut(last) {
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut sum = T::zero();
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum = sum + *v;
                    }
                    row.iter_mut().for_each(|v| *v = *v / sum);
                }
                out
            }
        }
    }

    /// Input gradient from the forward input `x`, output `y` and upstream
    /// gradient `dy`.
    pub fn backward<T: Scalar>(self, x: &[T], y: &[T], dy: &[T], last: usize) -> Vec<T> {
        match self {
            Activation::Relu => x
                .iter()
                .zip(dy)
                .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                .collect(),
            Activation::LeakyRelu { alpha } => {
                let a = T::lit(alpha);
                x.iter().zip(dy).map(|(&v, &g)| if v > T::zero() { g } else { a * g }).collect()
            }
            Activation::Sigmoid => y.iter().zip(dy).map(|(&s, &g)| g * s * (T::one() - s)).collect(),
            Activation::Tanh => y.iter().zip(dy).map(|(&t, &g)| g * (T::one() - t * t)).collect(),
            Activation::Softmax => {
                let mut dx = vec![T::zero(); dy.len()];
                for ((dxr, yr), gr) in dx.chunks_exact_mut(last).zip(y.chunks_exact(last)).zip(dy.chunks_exact(last)) {
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for j in 0..last {
                        dxr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                dx
            }
        }
    }
}
