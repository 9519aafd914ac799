use slicegan_tensor::ops::conv::ConvGeometry;
use slicegan_tensor::ops::pool;
use slicegan_tensor::Padding;

use crate::error::{Error, Result};

/// One layer of a [`super::ModelGraph`]. Shapes are per sample, without the
/// batch axis, channels last.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Dense { units: usize, bias: bool },
    BatchNorm,
    LeakyRelu { alpha: f64 },
    Relu,
    Reshape { target: Vec<usize> },
    Conv2d { filters: usize, kernel: usize, stride: usize, padding: Padding, bias: bool },
    /// Output extent is exactly `stride` times the input extent.
    Conv2dTranspose { filters: usize, kernel: usize, stride: usize, bias: bool },
    /// Stride 1, valid padding.
    Conv3d { filters: usize, kernel: usize, bias: bool },
    /// Non-overlapping 2x2x2 window, floor semantics.
    MaxPool3d,
    Dropout { rate: f64 },
    Flatten,
    Softmax,
    Sigmoid,
    Tanh,
}

/// How batch-normalization layers are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCountConvention {
    /// Count the running mean and variance next to gamma and beta, giving
    /// `4 * channels` per layer.
    pub batchnorm_counts_running_stats: bool,
}

impl Default for ParamCountConvention {
    fn default() -> Self {
        ParamCountConvention {
            batchnorm_counts_running_stats: true,
        }
    }
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Relu => "relu",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Conv2dTranspose { .. } => "conv2d_transpose",
            LayerSpec::Conv3d { .. } => "conv3d",
            LayerSpec::MaxPool3d => "maxpool3d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Tanh => "tanh",
        }
    }

    /// Hyperparameter sanity, independent of any input shape.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(format!("{name} must be positive"))
            } else {
                Ok(())
            }
        };
        match self {
            LayerSpec::Dense { units, .. } => positive("units", *units),
            LayerSpec::LeakyRelu { alpha } if !(alpha.is_finite() && *alpha >= 0.0) => {
                Err(format!("alpha must be finite and non-negative, got {alpha}"))
            }
            LayerSpec::Reshape { target } if target.is_empty() || target.contains(&0) => {
                Err(format!("invalid reshape target {target:?}"))
            }
            LayerSpec::Conv2d { filters, kernel, stride, .. }
            | LayerSpec::Conv2dTranspose { filters, kernel, stride, .. } => {
                positive("filters", *filters)?;
                positive("kernel", *kernel)?;
                positive("stride", *stride)
            }
            LayerSpec::Conv3d { filters, kernel, .. } => {
                positive("filters", *filters)?;
                positive("kernel", *kernel)
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(rate) => {
                Err(format!("dropout rate must lie in [0, 1), got {rate}"))
            }
            _ => Ok(()),
        }
    }

    /// Output shape for one sample of shape `input`.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let rank = |r: usize| {
            if input.len() == r {
                Ok(())
            } else {
                Err(format!("expects a rank-{r} input, got {input:?}"))
            }
        };
        let tensor_err = |e: slicegan_tensor::TensorError| e.to_string();
        match self {
            LayerSpec::Dense { units, .. } => {
                rank(1)?;
                Ok(vec![*units])
            }
            LayerSpec::BatchNorm
            | LayerSpec::LeakyRelu { .. }
            | LayerSpec::Relu
            | LayerSpec::Dropout { .. }
            | LayerSpec::Sigmoid
            | LayerSpec::Tanh => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                rank(1)?;
                Ok(input.to_vec())
            }
            LayerSpec::Reshape { target } => {
                let (from, to) = (input.iter().product::<usize>(), target.iter().product::<usize>());
                if from != to {
                    return Err(format!("cannot reshape {input:?} ({from} values) to {target:?} ({to} values)"));
                }
                Ok(target.clone())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Conv2d { filters, kernel, stride, padding, .. } => {
                rank(3)?;
                let g = ConvGeometry::conv2d(&batched(input), &[*kernel, *kernel, input[2], *filters], *stride, *padding)
                    .map_err(tensor_err)?;
                Ok(g.output_shape()[1..].to_vec())
            }
            LayerSpec::Conv2dTranspose { filters, kernel, stride, .. } => {
                rank(3)?;
                let g = ConvGeometry::conv2d_transpose(&batched(input), &[*kernel, *kernel, input[2], *filters], *stride)
                    .map_err(tensor_err)?;
                Ok(g.input_shape()[1..].to_vec())
            }
            LayerSpec::Conv3d { filters, kernel, .. } => {
                rank(4)?;
                let g = ConvGeometry::conv3d(&batched(input), &[*kernel, *kernel, *kernel, input[3], *filters])
                    .map_err(tensor_err)?;
                Ok(g.output_shape()[1..].to_vec())
            }
            LayerSpec::MaxPool3d => {
                rank(4)?;
                Ok(pool::maxpool3d_shape(&batched(input)).map_err(tensor_err)?[1..].to_vec())
            }
        }
    }

    /// Named parameter shapes given this layer's input shape, with a flag
    /// saying whether the optimizer updates them.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<(&'static str, Vec<usize>, bool)> {
        let channels = input.last().copied().unwrap_or(1);
        let bias = |on: bool, n: usize| on.then(|| ("bias", vec![n], true));
        match self {
            LayerSpec::Dense { units, bias: b } => {
                let mut v = vec![("kernel", vec![channels, *units], true)];
                v.extend(bias(*b, *units));
                v
            }
            LayerSpec::Conv2d { filters, kernel, bias: b, .. }
            | LayerSpec::Conv2dTranspose { filters, kernel, bias: b, .. } => {
                let mut v = vec![("kernel", vec![*kernel, *kernel, channels, *filters], true)];
                v.extend(bias(*b, *filters));
                v
            }
            LayerSpec::Conv3d { filters, kernel, bias: b } => {
                let mut v = vec![("kernel", vec![*kernel, *kernel, *kernel, channels, *filters], true)];
                v.extend(bias(*b, *filters));
                v
            }
            LayerSpec::BatchNorm => vec![
                ("gamma", vec![channels], true),
                ("beta", vec![channels], true),
                ("running_mean", vec![channels], false),
                ("running_var", vec![channels], false),
            ],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self, input: &[usize], convention: ParamCountConvention) -> usize {
        self.param_shapes(input)
            .iter()
            .filter(|(name, _, trainable)| *trainable || convention.batchnorm_counts_running_stats || !name.starts_with("running"))
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum()
    }
}

fn batched(input: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(input.len() + 1);
    s.push(1);
    s.extend_from_slice(input);
    s
}

/// Per-layer output shapes starting from `input_shape`; the first failing
/// layer is named in the error.
pub fn infer_shapes(layers: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let err = |detail: String| Error::LayerShape {
            layer: i,
            kind: layer.kind(),
            detail,
        };
        layer.validate().map_err(err)?;
        current = layer.output_shape(&current).map_err(err)?;
        shapes.push(current.clone());
    }
    Ok(shapes)
}
