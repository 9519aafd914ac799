use std::f64::consts::PI;

use slicegan_tensor::rng::{seeded, standard_normal, uniform, SeededRng};

use super::types::Volume;
use crate::error::{Error, Result};
use crate::labels::{Label, Provenance};

/// Shape and intensity settings of the synthetic scans. Positions and axes
/// are in normalized coordinates spanning `[-1, 1]` on every axis; levels
/// are raw intensities in `[0, 1]` before mapping to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomParams {
    pub brain_axes: [f64; 3],
    pub brain_level: f64,
    pub background_level: f64,
    pub ventricle_axes: [f64; 3],
    pub ventricle_level: f64,
    /// Smooth low-frequency intensity variation inside the brain.
    pub texture_amplitude: f64,
    /// Per-voxel Gaussian noise.
    pub noise_std: f64,
    /// Relative per-subject jitter of axes, center and brain level.
    pub jitter: f64,
    pub lesion_center: [f64; 3],
    pub lesion_axes: [f64; 3],
    /// Peak darkening of the bipolar signature.
    pub lesion_strength: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            brain_axes: [0.78, 0.84, 0.8],
            brain_level: 0.7,
            background_level: 0.05,
            ventricle_axes: [0.16, 0.12, 0.3],
            ventricle_level: 0.35,
            texture_amplitude: 0.06,
            noise_std: 0.02,
            jitter: 0.05,
            lesion_center: [-0.4, 0.25, 0.0],
            lesion_axes: [0.3, 0.3, 0.4],
            lesion_strength: 0.4,
        }
    }
}

const TEXTURE_TERMS: usize = 4;

/// A phantom generator for one grid size.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub dims: [usize; 3],
    pub params: PhantomParams,
}

impl Phantom {
    pub fn new(dims: [usize; 3], params: PhantomParams) -> Result<Self> {
        if dims.iter().any(|&d| d < 32) {
            return Err(Error::Shape(format!("phantom dims {dims:?} must each be at least 32")));
        }
        Ok(Phantom { dims, params })
    }

    fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let n = self.dims[axis] as f64;
        (0..self.dims[axis]).map(|i| (i as f64 + 0.5) / n * 2.0 - 1.0).collect()
    }

    /// Normalized coordinates of a voxel center.
    pub fn coords(&self, f: usize, t: usize, d: usize) -> [f64; 3] {
        let c = |i: usize, n: usize| (i as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        [c(f, self.dims[0]), c(t, self.dims[1]), c(d, self.dims[2])]
    }

    fn lesion_weight(&self, u: [f64; 3]) -> f64 {
        let p = &self.params;
        let r2: f64 = (0..3).map(|i| ((u[i] - p.lesion_center[i]) / p.lesion_axes[i]).powi(2)).sum();
        (1.0 - r2).max(0.0)
    }

    /// Whether the bipolar signature touches this voxel.
    pub fn in_lesion(&self, f: usize, t: usize, d: usize) -> bool {
        self.lesion_weight(self.coords(f, t, d)) > 0.0
    }

    /// Squared ellipsoid radius of a voxel against the nominal brain axes.
    pub fn brain_radius2(&self, f: usize, t: usize, d: usize) -> f64 {
        let u = self.coords(f, t, d);
        (0..3).map(|i| (u[i] / self.params.brain_axes[i]).powi(2)).sum()
    }

    /// Same seed, same class, same volume. Classes share every random draw
    /// so they differ only where the signature is applied.
    pub fn render(&self, seed: u64, label: Label) -> Volume {
        let p = &self.params;
        let mut rng = seeded(seed);
        let jit = |rng: &mut SeededRng| 1.0 + p.jitter * (2.0 * uniform(rng) - 1.0);
        let axes = p.brain_axes.map(|a| a * jit(&mut rng));
        let center: [f64; 3] = std::array::from_fn(|_| p.jitter * (2.0 * uniform(&mut rng) - 1.0) * 0.5);
        let level = p.brain_level * jit(&mut rng);

        let coords: [Vec<f64>; 3] = std::array::from_fn(|a| self.axis_coords(a));
        let mut texture: Vec<(f64, [Vec<f64>; 3])> = Vec::with_capacity(TEXTURE_TERMS);
        for _ in 0..TEXTURE_TERMS {
            let amp = p.texture_amplitude * (0.5 + uniform(&mut rng)) / TEXTURE_TERMS as f64 * 2.0;
            let waves: [Vec<f64>; 3] = std::array::from_fn(|a| {
                let freq = 1.0 + (uniform(&mut rng) * 3.0).floor();
                let phase = 2.0 * PI * uniform(&mut rng);
                coords[a].iter().map(|&u| (PI * freq * u + phase).cos()).collect()
            });
            texture.push((amp, waves));
        }

        let [nf, nt, nd] = self.dims;
        let mut voxels = Vec::with_capacity(nf * nt * nd);
        for d in 0..nd {
            for t in 0..nt {
                for f in 0..nf {
                    let u = [coords[0][f], coords[1][t], coords[2][d]];
                    let r = (0..3)
                        .map(|i| ((u[i] - center[i]) / axes[i]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    // Soft skull boundary a few percent of the radius wide.
                    let inside = ((1.0 - r) / 0.04).clamp(0.0, 1.0);
                    let ventricle: f64 = (0..3)
                        .map(|i| ((u[i] - center[i]) / p.ventricle_axes[i]).powi(2))
                        .sum();
                    let mut brain = if ventricle < 1.0 { p.ventricle_level } else { level };
                    brain += texture
                        .iter()
                        .map(|(a, w)| a * w[0][f] * w[1][t] * w[2][d])
                        .sum::<f64>();
                    let mut v = inside * brain + (1.0 - inside) * p.background_level;
                    v += p.noise_std * standard_normal(&mut rng);
                    if label == Label::Bipolar {
                        v -= p.lesion_strength * self.lesion_weight(u);
                    }
                    voxels.push((v.clamp(0.0, 1.0) * 2.0 - 1.0) as f32);
                }
            }
        }
        Volume {
            dims: self.dims,
            voxels,
            label: Some(label),
            provenance: Provenance::Synthetic,
            intensity_range: (0.0, 1.0),
        }
    }
}

/// Phantom with default parameters.
pub fn make_phantom(seed: u64, label: Label, dims: [usize; 3]) -> Result<Volume> {
    Ok(Phantom::new(dims, PhantomParams::default())?.render(seed, label))
}
