use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Output shape of a non-overlapping 2x2x2 max pool over `[batch, h, w, d, c]`.
/// Odd trailing rows are dropped.
pub fn maxpool3d_shape(input: &[usize]) -> Result<Vec<usize>> {
    if input.len() != 5 {
        return Err(TensorError::mismatch("maxpool3d", format!("expected rank 5, got {input:?}")));
    }
    if input[1..4].iter().any(|&n| n < 2) {
        return Err(TensorError::mismatch(
            "maxpool3d",
            format!("every spatial extent must be at least 2, got {:?}", &input[1..4]),
        ));
    }
    Ok(vec![input[0], input[1] / 2, input[2] / 2, input[3] / 2, input[4]])
}

/// Returns the pooled values and, per output element, the flat input index
/// that won.
pub fn maxpool3d<T: Scalar>(x: &[T], input: &[usize]) -> Result<(Vec<T>, Vec<usize>)> {
    let out_shape = maxpool3d_shape(input)?;
    let [_, n0, n1, n2, c] = input[..] else { unreachable!() };
    let [b, o0, o1, o2, _] = out_shape[..] else { unreachable!() };
    let len = b * o0 * o1 * o2 * c;
    let mut out = Vec::with_capacity(len);
    let mut argmax = Vec::with_capacity(len);
    for bi in 0..b {
        for i0 in 0..o0 {
            for i1 in 0..o1 {
                for i2 in 0..o2 {
                    for ch in 0..c {
                        let mut best = T::neg_infinity();
                        let mut best_at = 0;
                        for a in 0..2 {
                            for e in 0..2 {
                                for f in 0..2 {
                                    let idx = (((bi * n0 + 2 * i0 + a) * n1 + 2 * i1 + e) * n2 + 2 * i2 + f) * c + ch;
                                    if x[idx] > best {
                                        best = x[idx];
                                        best_at = idx;
                                    }
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_at);
                    }
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool_backward<T: Scalar>(dout: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&g, &i) in dout.iter().zip(argmax) {
        dx[i] = dx[i] + g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_semantics() {
        assert_eq!(maxpool3d_shape(&[1, 30, 30, 20, 64]).unwrap(), vec![1, 15, 15, 10, 64]);
        assert_eq!(maxpool3d_shape(&[1, 13, 13, 8, 64]).unwrap(), vec![1, 6, 6, 4, 64]);
        assert!(maxpool3d_shape(&[1, 1, 4, 4, 1]).is_err());
    }

    #[test]
    fn constant_stays_constant() {
        let (out, _) = maxpool3d(&[2.5f32; 3 * 4 * 5 * 2], &[1, 3, 4, 5, 2]).unwrap();
        assert_eq!(out.len(), 2 * 2 * 1 * 2);
        assert!(out.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn picks_the_maximum() {
        let mut x = vec![0.0f32; 8];
        x[5] = 3.0;
        let (out, arg) = maxpool3d(&x, &[1, 2, 2, 2, 1]).unwrap();
        assert_eq!(out, vec![3.0]);
        assert_eq!(arg, vec![5]);
    }
}
