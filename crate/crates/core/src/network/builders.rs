//! The three architectures: per-slice generator and discriminator, and the
//! volumetric classifier. Each has a full-size configuration and a small
//! desk-scale one; only the full-size ones carry the reference parameter
//! counts.

use serde::{Deserialize, Serialize};
use slicegan_tensor::Padding;

use super::graph::{ModelGraph, ModelKind};
use super::layer::LayerSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanArch {
    pub noise_dim: usize,
    pub dense_units: usize,
    /// Generated images are `image_side x image_side x 1`; must be a
    /// multiple of 4.
    pub image_side: usize,
    pub reshape_channels: usize,
    pub mid_channels: usize,
    pub kernel: usize,
    pub disc_filters: [usize; 2],
    pub disc_dense: [usize; 2],
    pub leaky_alpha: f64,
    pub dropout: f64,
}

impl GanArch {
    pub fn full(noise_dim: usize) -> Self {
        GanArch {
            noise_dim,
            dense_units: 1024,
            image_side: 64,
            reshape_channels: 256,
            mid_channels: 64,
            kernel: 5,
            disc_filters: [64, 128],
            disc_dense: [64, 64],
            leaky_alpha: 0.2,
            dropout: 0.3,
        }
    }

    /// 16x16 slices with every width cut down.
    pub fn desk() -> Self {
        GanArch {
            noise_dim: 32,
            dense_units: 128,
            image_side: 16,
            reshape_channels: 32,
            mid_channels: 16,
            kernel: 5,
            disc_filters: [16, 32],
            disc_dense: [32, 32],
            leaky_alpha: 0.2,
            dropout: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_side == 0 || self.image_side % 4 != 0 {
            return Err(Error::Config(format!(
                "image side must be a positive multiple of 4, got {}",
                self.image_side
            )));
        }
        if self.noise_dim == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn generator_layers(&self) -> Vec<LayerSpec> {
        let q = self.image_side / 4;
        let alpha = self.leaky_alpha;
        vec![
            LayerSpec::Dense { units: self.dense_units, bias: false },
            LayerSpec::BatchNorm,
            LayerSpec::LeakyRelu { alpha },
            LayerSpec::Dense { units: q * q * self.reshape_channels, bias: true },
            LayerSpec::LeakyRelu { alpha },
            LayerSpec::Reshape { target: vec![q, q, self.reshape_channels] },
            LayerSpec::Conv2dTranspose { filters: self.mid_channels, kernel: self.kernel, stride: 2, bias: false },
            LayerSpec::BatchNorm,
            LayerSpec::LeakyRelu { alpha },
            LayerSpec::Conv2dTranspose { filters: 1, kernel: self.kernel, stride: 2, bias: false },
            LayerSpec::Tanh,
        ]
    }

    pub fn discriminator_layers(&self) -> Vec<LayerSpec> {
        let alpha = self.leaky_alpha;
        let conv = |filters| LayerSpec::Conv2d {
            filters,
            kernel: self.kernel,
            stride: 2,
            padding: Padding::Same,
            bias: true,
        };
        vec![
            conv(self.disc_filters[0]),
            LayerSpec::LeakyRelu { alpha },
            LayerSpec::Dropout { rate: self.dropout },
            conv(self.disc_filters[1]),
            LayerSpec::LeakyRelu { alpha },
            LayerSpec::Dropout { rate: self.dropout },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: self.disc_dense[0], bias: true },
            LayerSpec::Dense { units: self.disc_dense[1], bias: true },
            LayerSpec::Dense { units: 1, bias: true },
            LayerSpec::Sigmoid,
        ]
    }

    /// Shape-checked generator without parameters.
    pub fn generator(&self) -> Result<ModelGraph> {
        self.validate()?;
        ModelGraph::new(ModelKind::Generator, vec![self.noise_dim], self.generator_layers())
    }

    pub fn discriminator(&self) -> Result<ModelGraph> {
        self.validate()?;
        ModelGraph::new(
            ModelKind::Discriminator,
            vec![self.image_side, self.image_side, 1],
            self.discriminator_layers(),
        )
    }
}

/// Full-size generator: 500-dimensional noise to a 64x64x1 slice.
pub fn build_generator(noise_dim: usize) -> Result<ModelGraph> {
    GanArch::full(noise_dim).generator()
}

/// Full-size discriminator over 64x64x1 slices.
pub fn build_discriminator() -> Result<ModelGraph> {
    GanArch::full(500).discriminator()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierArch {
    /// Input is `side x side x depth x 1`.
    pub side: usize,
    pub depth: usize,
    pub filters: usize,
    /// Conv blocks; all but the last are followed by pooling and batch norm.
    pub conv_blocks: usize,
    pub dense: Vec<usize>,
}

impl ClassifierArch {
    pub fn full() -> Self {
        ClassifierArch {
            side: 32,
            depth: 22,
            filters: 64,
            conv_blocks: 3,
            dense: vec![1024, 256],
        }
    }

    /// 8x8x22 stacks.
    pub fn desk() -> Self {
        ClassifierArch {
            side: 8,
            depth: 22,
            filters: 8,
            conv_blocks: 2,
            dense: vec![32],
        }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        for block in 0..self.conv_blocks {
            layers.push(LayerSpec::Conv3d { filters: self.filters, kernel: 3, bias: true });
            layers.push(LayerSpec::Relu);
            if block + 1 < self.conv_blocks {
                layers.push(LayerSpec::MaxPool3d);
                layers.push(LayerSpec::BatchNorm);
            }
        }
        layers.push(LayerSpec::Flatten);
        for &units in &self.dense {
            layers.push(LayerSpec::Dense { units, bias: true });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dense { units: 2, bias: true });
        layers.push(LayerSpec::Softmax);
        layers
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.side, self.side, self.depth, 1]
    }

    pub fn build(&self) -> Result<ModelGraph> {
        ModelGraph::new(ModelKind::Classifier, self.input_shape(), self.layers())
    }
}

/// Full-size classifier over 32x32x22 grayscale stacks.
pub fn build_classifier() -> Result<ModelGraph> {
    ClassifierArch::full().build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ParamCountConvention;

    #[test]
    fn desk_architectures_are_consistent() {
        let arch = GanArch::desk();
        assert_eq!(arch.generator().unwrap().output_shape(), &[16, 16, 1]);
        assert_eq!(arch.discriminator().unwrap().output_shape(), &[1]);
        let c = ClassifierArch::desk().build().unwrap();
        assert_eq!(c.output_shape(), &[2]);
        assert!(c.count_params(ParamCountConvention::default()).total < 20_000);
    }

    #[test]
    fn odd_image_side_is_rejected() {
        let mut arch = GanArch::desk();
        arch.image_side = 18;
        assert!(arch.generator().is_err());
    }
}
