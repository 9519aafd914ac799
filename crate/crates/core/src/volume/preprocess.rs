use super::types::{min_max, SliceStack, Volume};
use crate::error::{Error, Result};

/// Min-max maps `values` onto `[-1, 1]` in place. Constant input becomes
/// `-1` everywhere; input whose extrema already are exactly `-1` and `1` is
/// left untouched.
pub fn normalize_unit(values: &mut [f32]) {
    let (lo, hi) = min_max(values);
    if values.is_empty() || (lo == -1.0 && hi == 1.0) {
        return;
    }
    if lo == hi || !(hi - lo).is_finite() {
        values.iter_mut().for_each(|v| *v = -1.0);
        return;
    }
    let (lo, span) = (lo as f64, (hi - lo) as f64);
    for v in values.iter_mut() {
        *v = ((2.0 * (*v as f64 - lo) / span - 1.0) as f32).clamp(-1.0, 1.0);
    }
}

/// Non-overlapping `factor^3` mean pooling.
pub fn downsample_volume(v: &Volume, factor: usize) -> Result<Volume> {
    if factor == 0 || v.dims.iter().any(|&d| d % factor != 0) {
        return Err(Error::Shape(format!(
            "volume {:?} is not divisible by downsampling factor {factor}",
            v.dims
        )));
    }
    let out_dims = v.dims.map(|d| d / factor);
    let [of, ot, od] = out_dims;
    let mut sums = vec![0f64; of * ot * od];
    for d in 0..v.dims[2] {
        for t in 0..v.dims[1] {
            let row = &v.voxels[v.index(0, t, d)..v.index(0, t, d) + v.dims[0]];
            let base = of * (t / factor + ot * (d / factor));
            for (f, &x) in row.iter().enumerate() {
                sums[base + f / factor] += x as f64;
            }
        }
    }
    let n = (factor * factor * factor) as f64;
    Ok(Volume {
        dims: out_dims,
        voxels: sums.into_iter().map(|s| (s / n) as f32).collect(),
        label: v.label,
        provenance: v.provenance,
        intensity_range: v.intensity_range,
    })
}

fn extract(v: &Volume, start: [usize; 3], dims: [usize; 3], fill: f32, src_start: [usize; 3], copy: [usize; 3]) -> Volume {
    let mut voxels = vec![fill; dims.iter().product()];
    for d in 0..copy[2] {
        for t in 0..copy[1] {
            let src = v.index(src_start[0], src_start[1] + t, src_start[2] + d);
            let dst = start[0] + dims[0] * (start[1] + t + dims[1] * (start[2] + d));
            voxels[dst..dst + copy[0]].copy_from_slice(&v.voxels[src..src + copy[0]]);
        }
    }
    Volume {
        dims,
        voxels,
        label: v.label,
        provenance: v.provenance,
        intensity_range: v.intensity_range,
    }
}

/// Centers the depth axis on `target` slices: shallower volumes are padded
/// with their minimum intensity, deeper ones cropped.
pub fn fit_depth(v: &Volume, target: usize) -> Result<Volume> {
    if target == 0 {
        return Err(Error::Shape("target depth must be positive".into()));
    }
    let depth = v.dims[2];
    let dims = [v.dims[0], v.dims[1], target];
    let fill = min_max(&v.voxels).0;
    Ok(if depth <= target {
        extract(v, [0, 0, (target - depth) / 2], dims, fill, [0, 0, 0], v.dims)
    } else {
        extract(v, [0, 0, 0], dims, fill, [0, 0, (depth - target) / 2], dims)
    })
}

/// Centered crop of every axis down to a multiple of `factor`.
pub fn crop_to_multiple(v: &Volume, factor: usize) -> Result<Volume> {
    if factor == 0 || v.dims.iter().any(|&d| d < factor) {
        return Err(Error::Shape(format!("cannot crop {:?} to multiples of {factor}", v.dims)));
    }
    let dims = v.dims.map(|d| d - d % factor);
    let offset = [0, 1, 2].map(|i| (v.dims[i] - dims[i]) / 2);
    Ok(extract(v, [0; 3], dims, 0.0, offset, dims))
}

/// The centered contiguous band of `count` depth slices.
pub fn select_band(v: &Volume, count: usize) -> Result<SliceStack> {
    let depth = v.dims[2];
    if count == 0 || depth < count {
        return Err(Error::Shape(format!("cannot select {count} slices from depth {depth}")));
    }
    let start = (depth - count) / 2;
    let indices: Vec<usize> = (start..start + count).collect();
    let slices = indices.iter().map(|&d| v.slice(d).to_vec()).collect();
    SliceStack::new((v.dims[1], v.dims[0]), slices, indices, v.label, v.provenance)
}

/// 2x2 mean pooling of every slice; `target` must be half the input side.
pub fn resize_stack(s: &SliceStack, target: usize) -> Result<SliceStack> {
    let (h, w) = s.side;
    if target == 0 || h != 2 * target || w != 2 * target {
        return Err(Error::Shape(format!(
            "resize to {target}x{target} needs {0}x{0} slices, got {h}x{w}",
            2 * target
        )));
    }
    let slices = s
        .slices
        .iter()
        .map(|img| {
            let mut out = Vec::with_capacity(target * target);
            for r in 0..target {
                for c in 0..target {
                    let at = |dr: usize, dc: usize| img[(2 * r + dr) * w + 2 * c + dc] as f64;
                    out.push(((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0) as f32);
                }
            }
            out
        })
        .collect();
    SliceStack::new((target, target), slices, s.depth_indices.clone(), s.label, s.provenance)
}

/// Extents of the reduction chain from full volumes to classifier input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// `(front, top, depth)` of input volumes after depth fitting.
    pub volume: [usize; 3],
    pub factor: usize,
    pub band: usize,
    pub classifier_side: usize,
}

impl Geometry {
    /// 256x256x176 scans, 64x64 GAN slices, 32x32x22 classifier input.
    pub fn full() -> Self {
        Geometry {
            volume: [256, 256, 176],
            factor: 4,
            band: 22,
            classifier_side: 32,
        }
    }

    /// 64x64x176 phantoms, 16x16 GAN slices, 8x8x22 classifier input.
    pub fn desk() -> Self {
        Geometry {
            volume: [64, 64, 176],
            factor: 4,
            band: 22,
            classifier_side: 8,
        }
    }

    /// Slice side the GANs work on.
    pub fn gan_side(&self) -> usize {
        self.volume[0] / self.factor.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let [f, t, d] = self.volume;
        if f != t || self.factor == 0 || self.volume.iter().any(|&x| x % self.factor != 0) {
            return Err(Error::Config(format!(
                "volume {:?} must be square in-plane and divisible by {}",
                self.volume, self.factor
            )));
        }
        if self.band == 0 || self.band > d / self.factor {
            return Err(Error::Config(format!("band {} does not fit depth {}", self.band, d / self.factor)));
        }
        if self.gan_side() != 2 * self.classifier_side {
            return Err(Error::Config(format!(
                "classifier side {} must be half the GAN side {}",
                self.classifier_side,
                self.gan_side()
            )));
        }
        Ok(())
    }
}

/// Depth fit, downsampling and band selection: the GAN-side slice stack.
pub fn preprocess_volume(v: &Volume, g: &Geometry) -> Result<SliceStack> {
    g.validate()?;
    if v.dims[..2] != g.volume[..2] {
        return Err(Error::Shape(format!(
            "volume {:?} does not match the configured {:?}",
            v.dims, g.volume
        )));
    }
    let fitted = fit_depth(v, g.volume[2])?;
    select_band(&downsample_volume(&fitted, g.factor)?, g.band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Label, Provenance};

    fn vol(dims: [usize; 3], f: impl Fn(usize) -> f32) -> Volume {
        Volume::new(dims, (0..dims.iter().product()).map(f).collect(), Some(Label::Normal), Provenance::Real).unwrap()
    }

    #[test]
    fn single_hot_voxel_pools_to_one() {
        let v = vol([4, 4, 4], |i| if i == 13 { 64.0 } else { 0.0 });
        let d = downsample_volume(&v, 4).unwrap();
        assert_eq!(d.dims, [1, 1, 1]);
        assert_eq!(d.voxels, vec![1.0]);
    }

    #[test]
    fn pooling_matches_brute_force() {
        let v = vol([8, 4, 12], |i| ((i * 37) % 101) as f32 * 0.25 - 3.0);
        let d = downsample_volume(&v, 2).unwrap();
        for z in 0..6 {
            for y in 0..2 {
                for x in 0..4 {
                    let mut s = 0.0f64;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                s += v.at(2 * x + dx, 2 * y + dy, 2 * z + dz) as f64;
                            }
                        }
                    }
                    assert!((d.at(x, y, z) as f64 - s / 8.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn indivisible_dims_are_rejected() {
        let v = vol([6, 4, 4], |_| 0.0);
        assert!(downsample_volume(&v, 4).is_err());
        let c = crop_to_multiple(&v, 4).unwrap();
        assert_eq!(c.dims, [4, 4, 4]);
        assert_eq!(c.at(0, 0, 0), v.at(1, 0, 0));
    }

    #[test]
    fn band_is_centered() {
        let v = vol([1, 1, 44], |i| i as f32);
        let s = select_band(&v, 22).unwrap();
        assert_eq!(s.depth_indices, (11..33).collect::<Vec<_>>());
        assert_eq!(s.slices[0], vec![11.0]);
        let exact = select_band(&vol([1, 1, 22], |_| 0.0), 22).unwrap();
        assert_eq!(exact.depth_indices, (0..22).collect::<Vec<_>>());
        assert!(select_band(&vol([1, 1, 10], |_| 0.0), 22).is_err());
    }

    #[test]
    fn checkerboard_resizes_to_half() {
        let img: Vec<f32> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f32).collect();
        let s = SliceStack::new((4, 4), vec![img], vec![0], None, Provenance::Real).unwrap();
        let r = resize_stack(&s, 2).unwrap();
        assert_eq!(r.slices[0], vec![0.5; 4]);
        assert!(resize_stack(&s, 3).is_err());
    }

    #[test]
    fn depth_fit_pads_and_crops() {
        let v = vol([1, 1, 172], |i| i as f32);
        let p = fit_depth(&v, 176).unwrap();
        assert_eq!(p.dims[2], 176);
        assert_eq!(&p.voxels[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(p.voxels[2], 0.0);
        assert_eq!(p.voxels[3], 1.0);
        let c = fit_depth(&p, 172).unwrap();
        assert_eq!(c.voxels, v.voxels);
    }

    #[test]
    fn normalization() {
        let mut a = vec![2.0, 4.0, 6.0];
        normalize_unit(&mut a);
        assert_eq!(a, vec![-1.0, 0.0, 1.0]);
        let mut c = vec![5.0; 4];
        normalize_unit(&mut c);
        assert_eq!(c, vec![-1.0; 4]);
        let mut u = vec![-1.0, 0.3, 1.0];
        normalize_unit(&mut u);
        assert_eq!(u, vec![-1.0, 0.3, 1.0]);
    }

    #[test]
    fn geometries_are_consistent() {
        Geometry::full().validate().unwrap();
        Geometry::desk().validate().unwrap();
        assert_eq!(Geometry::full().gan_side(), 64);
        assert_eq!(Geometry::desk().gan_side(), 16);
    }
}
