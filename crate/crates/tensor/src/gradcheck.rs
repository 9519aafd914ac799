//! Central finite-difference gradient checking in `f64`.
//!
//! The numeric side only ever runs forward passes, so it is independent of
//! every backward rule it checks.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_relative_error: f64,
    pub coordinates: usize,
}

pub const DENOMINATOR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

/// Reduces `y` to a scalar with fixed pseudo-random weights so every output
/// element influences the loss differently.
pub fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let w = Tensor::<f64>::randn_seeded(if shape.is_empty() { vec![1] } else { shape.clone() }, seed)?;
    let w = tape.constant(shape.clone(), w.into_data())?;
    let y = if shape.is_empty() { tape.reshape(y, vec![1])? } else { y };
    let w = if shape.is_empty() { tape.reshape(w, vec![1])? } else { w };
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

/// Compares tape gradients of `build` with central differences of step `h`
/// over every coordinate of every input.
pub fn check<F>(inputs: &[Tensor<f64>], build: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(&t.clone().with_requires_grad()))
        .collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad_or_zeros(v)).collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x)).collect();
        let l = build(&mut t, &vs)?;
        Ok(t.scalar(l).expect("scalar loss"))
    };

    let mut worst: f64 = 0.0;
    let mut coordinates = 0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[i][j], numeric));
            coordinates += 1;
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        coordinates,
    })
}

/// Layer kinds covered by [`check_layer`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2dSame,
    Conv2dValid,
    Conv2dTranspose,
    Conv3d,
    MaxPool3d,
    BatchNormTraining,
    BatchNormInference,
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
    Softmax,
    Dropout,
    Flatten,
    BceWithLogits,
    SoftmaxCrossEntropy,
}

impl LayerKind {
    pub const ALL: [LayerKind; 17] = [
        LayerKind::Dense,
        LayerKind::Conv2dSame,
        LayerKind::Conv2dValid,
        LayerKind::Conv2dTranspose,
        LayerKind::Conv3d,
        LayerKind::MaxPool3d,
        LayerKind::BatchNormTraining,
        LayerKind::BatchNormInference,
        LayerKind::Relu,
        LayerKind::LeakyRelu,
        LayerKind::Sigmoid,
        LayerKind::Tanh,
        LayerKind::Softmax,
        LayerKind::Dropout,
        LayerKind::Flatten,
        LayerKind::BceWithLogits,
        LayerKind::SoftmaxCrossEntropy,
    ];
}

struct Dims(crate::rng::SeededRng);

impl Dims {
    fn pick(&mut self, lo: usize, hi: usize) -> usize {
        lo + (crate::rng::uniform(&mut self.0) * (hi - lo + 1) as f64) as usize
    }
}

fn randn(shape: &[usize], seed: u64) -> Result<Tensor<f64>> {
    Tensor::randn_seeded(shape.to_vec(), seed)
}

/// Builds a random small instance (at most 200 parameters) of `kind` from
/// `seed` and checks its gradients with step `1e-5`.
pub fn check_layer(kind: LayerKind, seed: u64) -> Result<GradCheckReport> {
    use crate::ops::activation::Activation;
    use crate::ops::conv::Padding;
    use crate::ops::norm::{BatchNormConfig, BatchNormStats};

    let mut d = Dims(crate::rng::seeded(crate::rng::derive_seed(seed, &[kind as u64])));
    let s = |k: u64| crate::rng::derive_seed(seed, &[kind as u64, k]);
    let h = 1e-5;
    let probe = s(99);
    match kind {
        LayerKind::Dense => {
            let (b, i, o) = (d.pick(1, 3), d.pick(1, 6), d.pick(1, 5));
            let inputs = [randn(&[b, i], s(0))?, randn(&[i, o], s(1))?, randn(&[o], s(2))?];
            check(&inputs, |t, v| {
                let y = t.matmul(v[0], v[1])?;
                let y = t.add_bias(y, v[2])?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::Conv2dSame | LayerKind::Conv2dValid => {
            let padding = if kind == LayerKind::Conv2dSame { Padding::Same } else { Padding::Valid };
            let k = [1, 3, 5][d.pick(0, 2)];
            let (b, hh, ww) = (d.pick(1, 2), d.pick(k.max(3), 6), d.pick(k.max(3), 6));
            let (ci, co, stride) = (d.pick(1, 2), d.pick(1, 3), d.pick(1, 2));
            let inputs = [randn(&[b, hh, ww, ci], s(0))?, randn(&[k, k, ci, co], s(1))?, randn(&[co], s(2))?];
            check(&inputs, |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), stride, padding)?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::Conv2dTranspose => {
            let k = [3, 5][d.pick(0, 1)];
            let (b, hh, ww) = (d.pick(1, 2), d.pick(2, 4), d.pick(2, 4));
            let (ci, co, stride) = (d.pick(1, 3), d.pick(1, 2), d.pick(1, 2));
            let inputs = [randn(&[b, hh, ww, ci], s(0))?, randn(&[k, k, ci, co], s(1))?];
            check(&inputs, |t, v| {
                let y = t.conv2d_transpose(v[0], v[1], stride)?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::Conv3d => {
            let (n0, n1, n2) = (d.pick(3, 5), d.pick(3, 5), d.pick(3, 4));
            let (ci, co) = (d.pick(1, 2), d.pick(1, 3));
            let inputs = [randn(&[1, n0, n1, n2, ci], s(0))?, randn(&[3, 3, 3, ci, co], s(1))?, randn(&[co], s(2))?];
            check(&inputs, |t, v| {
                let y = t.conv3d(v[0], v[1], Some(v[2]))?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::MaxPool3d => {
            let shape = [d.pick(1, 2), d.pick(2, 5), d.pick(2, 5), d.pick(2, 4), d.pick(1, 2)];
            check(&[randn(&shape, s(0))?], |t, v| {
                let y = t.maxpool3d(v[0])?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::BatchNormTraining | LayerKind::BatchNormInference => {
            let training = kind == LayerKind::BatchNormTraining;
            let c = d.pick(1, 3);
            let shape = [d.pick(2, 4), d.pick(1, 3), c];
            let mut stats = BatchNormStats::<f64>::new(c);
            stats.mean = randn(&[c], s(3))?.into_data();
            stats.var = randn(&[c], s(4))?.data().iter().map(|v| 0.5 + v * v).collect();
            let inputs = [randn(&shape, s(0))?, randn(&[c], s(1))?, randn(&[c], s(2))?];
            check(&inputs, |t, v| {
                let mut st = stats.clone();
                let y = t.batchnorm(v[0], v[1], v[2], &mut st, BatchNormConfig::default(), training)?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::Relu | LayerKind::LeakyRelu | LayerKind::Sigmoid | LayerKind::Tanh | LayerKind::Softmax => {
            let act = match kind {
                LayerKind::Relu => Activation::Relu,
                LayerKind::LeakyRelu => Activation::LeakyRelu { alpha: 0.2 },
                LayerKind::Sigmoid => Activation::Sigmoid,
                LayerKind::Tanh => Activation::Tanh,
                _ => Activation::Softmax,
            };
            let shape = [d.pick(1, 4), d.pick(2, 6)];
            check(&[randn(&shape, s(0))?], |t, v| {
                let y = t.activation(v[0], act);
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::Dropout => {
            let shape = [d.pick(1, 4), d.pick(2, 8)];
            let mask_seed = s(5);
            check(&[randn(&shape, s(0))?], |t, v| {
                let y = t.dropout(v[0], 0.3, true, mask_seed)?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::Flatten => {
            let shape = [d.pick(1, 3), d.pick(1, 3), d.pick(1, 4), d.pick(1, 3)];
            check(&[randn(&shape, s(0))?], |t, v| {
                let y = t.flatten(v[0])?;
                weighted_sum(t, y, probe)
            }, h)
        }
        LayerKind::BceWithLogits => {
            let n = d.pick(1, 8);
            let targets: Vec<f64> = (0..n).map(|i| ((seed as usize + i) % 2) as f64).collect();
            check(&[randn(&[n, 1], s(0))?], |t, v| t.bce_with_logits(v[0], &targets), h)
        }
        LayerKind::SoftmaxCrossEntropy => {
            let (rows, classes) = (d.pick(1, 5), d.pick(2, 4));
            let labels: Vec<usize> = (0..rows).map(|i| (seed as usize + 3 * i) % classes).collect();
            check(&[randn(&[rows, classes], s(0))?], |t, v| t.softmax_cross_entropy(v[0], &labels), h)
        }
    }
}
