use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Returns `(m, k, n)` for `[m, k] x [k, n]`.
pub fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    match (a, b) {
        (&[m, k], &[k2, n]) if k == k2 => Ok((m, k, n)),
        _ => Err(TensorError::mismatch(
            "matmul",
            format!("cannot multiply {a:?} by {b:?}"),
        )),
    }
}

pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    T::gemm(false, false, m, n, k, a, b, T::zero(), &mut out);
    out
}

/// Gradients of `a . b` given the upstream gradient `dout: [m, n]`.
pub fn matmul_backward<T: Scalar>(
    a: &[T],
    b: &[T],
    dout: &[T],
    m: usize,
    k: usize,
    n: usize,
) -> (Vec<T>, Vec<T>) {
    let mut da = vec![T::zero(); m * k];
    T::gemm(false, true, m, k, n, dout, b, T::zero(), &mut da);
    let mut db = vec![T::zero(); k * n];
    T::gemm(true, false, k, n, m, a, dout, T::zero(), &mut db);
    (da, db)
}

/// Adds `bias[c]` to every row of a `[rows, c]` matrix in place.
pub fn add_bias<T: Scalar>(x: &mut [T], bias: &[T]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
}

/// Column sums of a `[rows, c]` matrix: the bias gradient.
pub fn bias_grad<T: Scalar>(dout: &[T], channels: usize) -> Vec<T> {
    let mut db = vec![T::zero(); channels];
    for row in dout.chunks_exact(channels) {
        for (g, &d) in db.iter_mut().zip(row) {
            *g = *g + d;
        }
    }
    db
}
