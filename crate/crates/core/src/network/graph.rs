use slicegan_tensor::rng::derive_seed;
use slicegan_tensor::{Activation, BatchNormConfig, BatchNormStats, Tape, Tensor, Var};

use super::layer::{infer_shapes, LayerSpec, ParamCountConvention};
use crate::error::{Error, Result};

/// Which architecture a graph holds; stored in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Generator,
    Discriminator,
    Classifier,
    Custom,
}

impl ModelKind {
    pub fn tag(self) -> u32 {
        match self {
            ModelKind::Generator => 1,
            ModelKind::Discriminator => 2,
            ModelKind::Classifier => 3,
            ModelKind::Custom => 255,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Generator),
            2 => Some(ModelKind::Discriminator),
            3 => Some(ModelKind::Classifier),
            255 => Some(ModelKind::Custom),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: &'static str,
    pub tensor: Tensor<f32>,
    pub trainable: bool,
}

/// Standard deviation of the truncated-normal weight initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    pub kind: ModelKind,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    /// Empty until [`ModelGraph::init_params`]; then one entry per layer.
    params: Vec<Vec<Param>>,
    pub batchnorm: BatchNormConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub per_layer: Vec<usize>,
    pub total: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    /// Batch statistics and dropout on.
    pub training: bool,
    /// Parameters enter the tape as gradient-requiring leaves.
    pub trainable: bool,
    /// Seeds the dropout masks.
    pub seed: u64,
    /// Stop before a trailing sigmoid/softmax and return logits.
    pub logits: bool,
}

impl ForwardOptions {
    pub fn inference() -> Self {
        ForwardOptions {
            training: false,
            trainable: false,
            seed: 0,
            logits: false,
        }
    }

    pub fn training(seed: u64) -> Self {
        ForwardOptions {
            training: true,
            trainable: true,
            seed,
            logits: true,
        }
    }
}

/// Result of recording a model on a tape.
pub struct ForwardPass {
    pub output: Var,
    /// `(layer, param index, var)` for every parameter put on the tape.
    param_vars: Vec<(usize, usize, Var)>,
    /// Updated running statistics per batch-norm layer (training mode).
    stats: Vec<(usize, BatchNormStats<f32>)>,
}

impl ModelGraph {
    /// Validates the layers and infers every shape; parameters are not
    /// allocated yet.
    pub fn new(kind: ModelKind, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let shapes = infer_shapes(&layers, &input_shape)?;
        Ok(ModelGraph {
            kind,
            input_shape,
            layers,
            shapes,
            params: Vec::new(),
            batchnorm: BatchNormConfig::default(),
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(Vec::as_slice).unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Per-layer output shapes.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    fn layer_input(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn count_params(&self, convention: ParamCountConvention) -> ParamReport {
        let per_layer: Vec<usize> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| l.param_count(self.layer_input(i), convention))
            .collect();
        let total = per_layer.iter().sum();
        ParamReport { per_layer, total }
    }

    pub fn is_initialized(&self) -> bool {
        self.params.len() == self.layers.len()
    }

    /// Kernels truncated-normal (std 0.02), biases and beta zero, gamma one,
    /// running mean 0 and variance 1. Deterministic in `seed`.
    pub fn init_params(&mut self, seed: u64) -> Result<()> {
        let mut all = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut params = Vec::new();
            for (j, (name, shape, trainable)) in layer.param_shapes(self.layer_input(i)).into_iter().enumerate() {
                let tensor = match name {
                    "kernel" => Tensor::truncated_normal(shape, INIT_STD, derive_seed(seed, &[i as u64, j as u64]))?,
                    "gamma" | "running_var" => Tensor::full(shape, 1.0)?,
                    _ => Tensor::zeros(shape)?,
                };
                params.push(Param { name, tensor, trainable });
            }
            all.push(params);
        }
        self.params = all;
        Ok(())
    }

    pub fn initialized(mut self, seed: u64) -> Result<Self> {
        self.init_params(seed)?;
        Ok(self)
    }

    pub fn params(&self) -> &[Vec<Param>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Param>] {
        &mut self.params
    }

    pub fn param(&self, layer: usize, name: &str) -> Option<&Param> {
        self.params.get(layer)?.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, layer: usize, name: &str) -> Option<&mut Param> {
        self.params.get_mut(layer)?.iter_mut().find(|p| p.name == name)
    }

    /// Trainable parameter tensors in a fixed order.
    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Tensor<f32>> {
        self.params
            .iter_mut()
            .flatten()
            .filter(|p| p.trainable)
            .map(|p| &mut p.tensor)
    }

    /// Records a forward pass of `x: [batch, input_shape...]` on `tape`.
    pub fn forward(&self, tape: &mut Tape<f32>, x: Var, opts: ForwardOptions) -> Result<ForwardPass> {
        if !self.is_initialized() {
            return Err(Error::contract("forward on a model without parameters"));
        }
        let xs = tape.shape(x);
        if xs.len() != self.input_shape.len() + 1 || xs[1..] != self.input_shape[..] {
            return Err(Error::Shape(format!(
                "model expects [batch, {:?}], got {:?}",
                self.input_shape, xs
            )));
        }
        let batch = xs[0];
        let mut pass = ForwardPass {
            output: x,
            param_vars: Vec::new(),
            stats: Vec::new(),
        };
        let last = self.layers.len();
        let stop = if opts.logits && matches!(self.layers.last(), Some(LayerSpec::Sigmoid | LayerSpec::Softmax)) {
            last - 1
        } else {
            last
        };
        let mut h = x;
        for i in 0..stop {
            let mut put = |tape: &mut Tape<f32>, name: &str| -> Var {
                let (j, p) = self.params[i]
                    .iter()
                    .enumerate()
                    .find(|(_, p)| p.name == name)
                    .expect("parameter allocated at init");
                let v = if opts.trainable && p.trainable {
                    tape.leaf(&p.tensor.clone().with_requires_grad())
                } else {
                    tape.leaf(&p.tensor)
                };
                if p.trainable {
                    pass.param_vars.push((i, j, v));
                }
                v
            };
            h = match &self.layers[i] {
                LayerSpec::Dense { bias, .. } => {
                    let k = put(tape, "kernel");
                    let y = tape.matmul(h, k)?;
                    if *bias {
                        let b = put(tape, "bias");
                        tape.add_bias(y, b)?
                    } else {
                        y
                    }
                }
                LayerSpec::Conv2d { stride, padding, bias, .. } => {
                    let k = put(tape, "kernel");
                    let b = bias.then(|| put(tape, "bias"));
                    tape.conv2d(h, k, b, *stride, *padding)?
                }
                LayerSpec::Conv2dTranspose { stride, bias, .. } => {
                    let k = put(tape, "kernel");
                    let y = tape.conv2d_transpose(h, k, *stride)?;
                    if *bias {
                        let b = put(tape, "bias");
                        tape.add_bias(y, b)?
                    } else {
                        y
                    }
                }
                LayerSpec::Conv3d { bias, .. } => {
                    let k = put(tape, "kernel");
                    let b = bias.then(|| put(tape, "bias"));
                    tape.conv3d(h, k, b)?
                }
                LayerSpec::BatchNorm => {
                    let g = put(tape, "gamma");
                    let b = put(tape, "beta");
                    let mut stats = BatchNormStats {
                        mean: self.param(i, "running_mean").expect("allocated").tensor.data().to_vec(),
                        var: self.param(i, "running_var").expect("allocated").tensor.data().to_vec(),
                    };
                    let y = tape.batchnorm(h, g, b, &mut stats, self.batchnorm, opts.training)?;
                    if opts.training {
                        pass.stats.push((i, stats));
                    }
                    y
                }
                LayerSpec::LeakyRelu { alpha } => tape.activation(h, Activation::LeakyRelu { alpha: *alpha }),
                LayerSpec::Relu => tape.activation(h, Activation::Relu),
                LayerSpec::Sigmoid => tape.activation(h, Activation::Sigmoid),
                LayerSpec::Tanh => tape.activation(h, Activation::Tanh),
                LayerSpec::Softmax => tape.activation(h, Activation::Softmax),
                LayerSpec::Dropout { rate } => tape.dropout(h, *rate, opts.training, derive_seed(opts.seed, &[i as u64]))?,
                LayerSpec::Reshape { target } => {
                    let mut s = vec![batch];
                    s.extend_from_slice(target);
                    tape.reshape(h, s)?
                }
                LayerSpec::Flatten => tape.flatten(h)?,
                LayerSpec::MaxPool3d => tape.maxpool3d(h)?,
            };
        }
        pass.output = h;
        Ok(pass)
    }

    /// Stores the running statistics a training-mode pass computed.
    pub fn commit_batchnorm(&mut self, pass: &ForwardPass) {
        for (i, stats) in &pass.stats {
            if let Some(p) = self.param_mut(*i, "running_mean") {
                p.tensor.data_mut().copy_from_slice(&stats.mean);
            }
            if let Some(p) = self.param_mut(*i, "running_var") {
                p.tensor.data_mut().copy_from_slice(&stats.var);
            }
        }
    }

    /// Copies tape gradients into the `grad` slot of each trainable tensor.
    pub fn store_grads(&mut self, tape: &Tape<f32>, pass: &ForwardPass) -> Result<()> {
        for &(i, j, v) in &pass.param_vars {
            tape.write_grad(v, &mut self.params[i][j].tensor)?;
        }
        Ok(())
    }

    /// Inference-mode forward of a batch, returning the output values.
    pub fn predict_batch(&self, input: Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let x = tape.leaf(&input);
        let pass = self.forward(&mut tape, x, ForwardOptions::inference())?;
        Ok(tape.tensor(pass.output))
    }
}
