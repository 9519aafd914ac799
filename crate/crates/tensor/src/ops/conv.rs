//! Convolutions lowered to GEMM through im2col / col2im.
//!
//! Every geometry is expressed over three spatial axes; 2-D convolutions use
//! a trailing spatial axis of extent 1. A transposed convolution is described
//! by the geometry of the ordinary convolution it is the adjoint of, i.e. the
//! convolution mapping its (large) output back to its (small) input.

use crate::error::{Result, TensorError};
use crate::ops::linalg::{add_bias, bias_grad};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Output extent `ceil(n / stride)`, zero padding split with the smaller
    /// half in front.
    Same,
    /// No padding; output extent `floor((n - k) / stride) + 1`.
    Valid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub spatial_rank: usize,
    pub input: [usize; 3],
    pub output: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: usize,
    pub pad: [usize; 3],
    pub c_in: usize,
    pub c_out: usize,
}

fn axis_extent(n: usize, k: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = n.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(n);
            Some((out, total / 2))
        }
        Padding::Valid => (n >= k).then(|| ((n - k) / stride + 1, 0)),
    }
}

impl ConvGeometry {
    fn build(
        op: &'static str,
        input_shape: &[usize],
        kernel_shape: &[usize],
        spatial_rank: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if input_shape.len() != spatial_rank + 2 || kernel_shape.len() != spatial_rank + 2 {
            return Err(TensorError::mismatch(
                op,
                format!("input {input_shape:?} / kernel {kernel_shape:?} must both have rank {}", spatial_rank + 2),
            ));
        }
        if stride == 0 {
            return Err(TensorError::mismatch(op, "stride must be positive"));
        }
        let c_in = input_shape[spatial_rank + 1];
        if kernel_shape[spatial_rank] != c_in {
            return Err(TensorError::mismatch(
                op,
                format!("input has {c_in} channels, kernel expects {}", kernel_shape[spatial_rank]),
            ));
        }
        let mut g = ConvGeometry {
            batch: input_shape[0],
            spatial_rank,
            input: [1; 3],
            output: [1; 3],
            kernel: [1; 3],
            stride,
            pad: [0; 3],
            c_in,
            c_out: kernel_shape[spatial_rank + 1],
        };
        for axis in 0..spatial_rank {
            let (n, k) = (input_shape[axis + 1], kernel_shape[axis]);
            let (out, pad) = axis_extent(n, k, stride, padding).ok_or_else(|| {
                TensorError::mismatch(op, format!("kernel {k} does not fit input extent {n} on axis {axis}"))
            })?;
            g.input[axis] = n;
            g.output[axis] = out;
            g.kernel[axis] = k;
            g.pad[axis] = pad;
        }
        Ok(g)
    }

    /// `input: [batch, h, w, c_in]`, `kernel: [kh, kw, c_in, c_out]`.
    pub fn conv2d(input: &[usize], kernel: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        Self::build("conv2d", input, kernel, 2, stride, padding)
    }

    /// `input: [batch, h, w, d, c_in]`, `kernel: [kh, kw, kd, c_in, c_out]`,
    /// stride 1, valid padding.
    pub fn conv3d(input: &[usize], kernel: &[usize]) -> Result<Self> {
        Self::build("conv3d", input, kernel, 3, 1, Padding::Valid)
    }

    /// Geometry for a transposed 2-D convolution of `input: [batch, h, w,
    /// c_in]` with `kernel: [kh, kw, c_in, c_out]`, whose output is exactly
    /// `[batch, h * stride, w * stride, c_out]`.
    pub fn conv2d_transpose(input: &[usize], kernel: &[usize], stride: usize) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(TensorError::mismatch(
                "conv2d_transpose",
                format!("input {input:?} / kernel {kernel:?} must both have rank 4"),
            ));
        }
        if kernel[2] != input[3] {
            return Err(TensorError::mismatch(
                "conv2d_transpose",
                format!("input has {} channels, kernel expects {}", input[3], kernel[2]),
            ));
        }
        if stride == 0 {
            return Err(TensorError::mismatch("conv2d_transpose", "stride must be positive"));
        }
        let big = [input[0], input[1] * stride, input[2] * stride, kernel[3]];
        let adjoint_kernel = [kernel[0], kernel[1], kernel[3], kernel[2]];
        let g = Self::build("conv2d_transpose", &big, &adjoint_kernel, 2, stride, Padding::Same)?;
        debug_assert_eq!(&g.output[..2], &input[1..3]);
        Ok(g)
    }

    pub fn in_positions(&self) -> usize {
        self.input.iter().product()
    }

    pub fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Rows of the im2col matrix.
    pub fn rows(&self) -> usize {
        self.batch * self.out_positions()
    }

    /// Columns of the im2col matrix.
    pub fn patch(&self) -> usize {
        self.kernel_volume() * self.c_in
    }

    pub fn input_shape(&self) -> Vec<usize> {
        let mut s = vec![self.batch];
        s.extend_from_slice(&self.input[..self.spatial_rank]);
        s.push(self.c_in);
        s
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let mut s = vec![self.batch];
        s.extend_from_slice(&self.output[..self.spatial_rank]);
        s.push(self.c_out);
        s
    }

    // Input coordinate hit by output index `o` and kernel tap `k` on `axis`.
    #[inline]
    fn source(&self, axis: usize, o: usize, k: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.pad[axis])?;
        (pos < self.input[axis]).then_some(pos)
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        // f(col_row, col_offset, input_offset) for every in-bounds tap.
        let [o0, o1, o2] = self.output;
        let [k0, k1, k2] = self.kernel;
        let [n0, n1, n2] = self.input;
        let patch = self.patch();
        let mut row = 0;
        for b in 0..self.batch {
            for i0 in 0..o0 {
                for i1 in 0..o1 {
                    for i2 in 0..o2 {
                        for a in 0..k0 {
                            let Some(x0) = self.source(0, i0, a) else { continue };
                            for c in 0..k1 {
                                let Some(x1) = self.source(1, i1, c) else { continue };
                                for e in 0..k2 {
                                    let Some(x2) = self.source(2, i2, e) else { continue };
                                    let col = row * patch + ((a * k1 + c) * k2 + e) * self.c_in;
                                    let src = (((b * n0 + x0) * n1 + x1) * n2 + x2) * self.c_in;
                                    f(row, col, src);
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }
}

pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    debug_assert_eq!(x.len(), g.batch * g.in_positions() * g.c_in);
    let mut cols = vec![T::zero(); g.rows() * g.patch()];
    let c = g.c_in;
    g.for_each_tap(|_, col, src| cols[col..col + c].copy_from_slice(&x[src..src + c]));
    cols
}

pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    debug_assert_eq!(cols.len(), g.rows() * g.patch());
    let mut x = vec![T::zero(); g.batch * g.in_positions() * g.c_in];
    let c = g.c_in;
    g.for_each_tap(|_, col, src| {
        for (d, &s) in x[src..src + c].iter_mut().zip(&cols[col..col + c]) {
            *d = *d + s;
        }
    });
    x
}

/// Forward convolution. `kernel` is laid out `[taps..., c_in, c_out]`.
/// Returns the output and the im2col matrix for reuse in backward.
pub fn conv_forward<T: Scalar>(
    x: &[T],
    kernel: &[T],
    bias: Option<&[T]>,
    g: &ConvGeometry,
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(x, g);
    let mut out = vec![T::zero(); g.rows() * g.c_out];
    T::gemm(false, false, g.rows(), g.c_out, g.patch(), &cols, kernel, T::zero(), &mut out);
    if let Some(b) = bias {
        add_bias(&mut out, b);
    }
    (out, cols)
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub fn conv_backward<T: Scalar>(
    dout: &[T],
    cols: &[T],
    kernel: &[T],
    g: &ConvGeometry,
    need: [bool; 3],
) -> ConvGrads<T> {
    let (rows, patch) = (g.rows(), g.patch());
    let input = need[0].then(|| {
        let mut dcols = vec![T::zero(); rows * patch];
        T::gemm(false, true, rows, patch, g.c_out, dout, kernel, T::zero(), &mut dcols);
        col2im(&dcols, g)
    });
    let kernel = need[1].then(|| {
        let mut dk = vec![T::zero(); patch * g.c_out];
        T::gemm(true, false, patch, g.c_out, rows, cols, dout, T::zero(), &mut dk);
        dk
    });
    let bias = need[2].then(|| bias_grad(dout, g.c_out));
    ConvGrads { input, kernel, bias }
}

/// `[taps, a, b]` -> `[a, taps, b]`.
fn swap_leading<T: Scalar>(src: &[T], taps: usize, a: usize, b: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for t in 0..taps {
        for i in 0..a {
            let s = (t * a + i) * b;
            let d = (i * taps + t) * b;
            out[d..d + b].copy_from_slice(&src[s..s + b]);
        }
    }
    out
}

/// Transposed convolution forward. `kernel` is `[kh, kw, c_in, c_out]` in the
/// transposed op's own terms; `g` is from [`ConvGeometry::conv2d_transpose`].
pub fn conv_transpose_forward<T: Scalar>(x: &[T], kernel: &[T], g: &ConvGeometry) -> Vec<T> {
    let taps = g.kernel_volume();
    let (small_c, big_c) = (g.c_out, g.c_in);
    let w = swap_leading(kernel, taps, small_c, big_c);
    let mut cols = vec![T::zero(); g.rows() * g.patch()];
    T::gemm(false, false, g.rows(), g.patch(), small_c, x, &w, T::zero(), &mut cols);
    col2im(&cols, g)
}

pub fn conv_transpose_backward<T: Scalar>(
    dout: &[T],
    x: &[T],
    kernel: &[T],
    g: &ConvGeometry,
    need: [bool; 2],
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let taps = g.kernel_volume();
    let (small_c, big_c) = (g.c_out, g.c_in);
    let dcols = im2col(dout, g);
    let dx = need[0].then(|| {
        let w = swap_leading(kernel, taps, small_c, big_c);
        let mut dx = vec![T::zero(); g.rows() * small_c];
        T::gemm(false, true, g.rows(), small_c, g.patch(), &dcols, &w, T::zero(), &mut dx);
        dx
    });
    let dk = need[1].then(|| {
        let mut dw = vec![T::zero(); small_c * g.patch()];
        T::gemm(true, false, small_c, g.patch(), g.rows(), x, &dcols, T::zero(), &mut dw);
        swap_leading(&dw, small_c, taps, big_c)
    });
    (dx, dk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_halves_with_stride_two() {
        let g = ConvGeometry::conv2d(&[1, 64, 64, 1], &[5, 5, 1, 64], 2, Padding::Same).unwrap();
        assert_eq!(g.output_shape(), vec![1, 32, 32, 64]);
        assert_eq!(g.pad[..2], [1, 1]);
    }

    #[test]
    fn valid_three_by_three_of_ones() {
        let g = ConvGeometry::conv2d(&[1, 4, 4, 1], &[3, 3, 1, 1], 1, Padding::Valid).unwrap();
        let (out, _) = conv_forward(&[1.0f32; 16], &[1.0; 9], None, &g);
        assert_eq!(g.output_shape(), vec![1, 2, 2, 1]);
        assert_eq!(out, vec![9.0; 4]);
    }

    #[test]
    fn channel_mismatch() {
        assert!(ConvGeometry::conv2d(&[1, 8, 8, 3], &[3, 3, 2, 4], 1, Padding::Same).is_err());
        assert!(ConvGeometry::conv2d_transpose(&[1, 8, 8, 3], &[5, 5, 2, 4], 2).is_err());
        assert!(ConvGeometry::conv3d(&[1, 2, 8, 8, 1], &[3, 3, 3, 1, 4]).is_err());
    }

    #[test]
    fn transpose_doubles_extent() {
        let g = ConvGeometry::conv2d_transpose(&[1, 16, 16, 256], &[5, 5, 256, 64], 2).unwrap();
        assert_eq!(g.input_shape(), vec![1, 32, 32, 64]);
        let g = ConvGeometry::conv2d_transpose(&[1, 32, 32, 64], &[5, 5, 64, 1], 2).unwrap();
        assert_eq!(g.input_shape(), vec![1, 64, 64, 1]);
    }

    #[test]
    fn conv3d_shrinks_each_axis_by_two() {
        let g = ConvGeometry::conv3d(&[1, 32, 32, 22, 1], &[3, 3, 3, 1, 64]).unwrap();
        assert_eq!(g.output_shape(), vec![1, 30, 30, 20, 64]);
        let g = ConvGeometry::conv3d(&[1, 15, 15, 10, 64], &[3, 3, 3, 64, 64]).unwrap();
        assert_eq!(g.output_shape(), vec![1, 13, 13, 8, 64]);
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        // <conv(y), x> == <y, conv_transpose(x)> for the shared kernel.
        let (h, s, cin_t, cout_t) = (3, 2, 2, 3);
        let kernel: Vec<f64> = (0..5 * 5 * cin_t * cout_t).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let x: Vec<f64> = (0..h * h * cin_t).map(|i| ((i * 5 % 13) as f64 - 6.0) / 4.0).collect();
        let g = ConvGeometry::conv2d_transpose(&[1, h, h, cin_t], &[5, 5, cin_t, cout_t], s).unwrap();
        let big = h * s;
        let y: Vec<f64> = (0..big * big * cout_t).map(|i| ((i * 3 % 17) as f64 - 8.0) / 5.0).collect();

        let t = conv_transpose_forward(&x, &kernel, &g);
        // conv of y uses the kernel as [taps, cout_t, cin_t]
        let mut k_adj = vec![0.0; kernel.len()];
        for tap in 0..25 {
            for i in 0..cin_t {
                for o in 0..cout_t {
                    k_adj[(tap * cout_t + o) * cin_t + i] = kernel[(tap * cin_t + i) * cout_t + o];
                }
            }
        }
        let (cy, _) = conv_forward(&y, &k_adj, None, &g);
        let lhs: f64 = cy.iter().zip(&x).map(|(a, b)| a * b).sum();
        let rhs: f64 = y.iter().zip(&t).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}
