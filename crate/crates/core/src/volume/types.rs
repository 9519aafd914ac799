use crate::error::{Error, Result};
use crate::labels::{Label, Provenance};

/// One 3-D scan. Voxels are stored front-fastest:
/// `index = f + front * (t + top * d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    /// `(front, top, depth)`.
    pub dims: [usize; 3],
    pub voxels: Vec<f32>,
    /// `None` for unlabeled scans.
    pub label: Option<Label>,
    pub provenance: Provenance,
    /// Intensity extremes before normalization.
    pub intensity_range: (f32, f32),
}

impl Volume {
    pub fn new(dims: [usize; 3], voxels: Vec<f32>, label: Option<Label>, provenance: Provenance) -> Result<Self> {
        if dims.contains(&0) || dims.iter().product::<usize>() != voxels.len() {
            return Err(Error::Shape(format!(
                "volume dims {dims:?} do not match {} voxels",
                voxels.len()
            )));
        }
        let range = min_max(&voxels);
        Ok(Volume {
            dims,
            voxels,
            label,
            provenance,
            intensity_range: range,
        })
    }

    #[inline]
    pub fn index(&self, f: usize, t: usize, d: usize) -> usize {
        f + self.dims[0] * (t + self.dims[1] * d)
    }

    pub fn at(&self, f: usize, t: usize, d: usize) -> f32 {
        self.voxels[self.index(f, t, d)]
    }

    /// The `top x front` grid at depth `d`, row-major (rows are `top`).
    pub fn slice(&self, d: usize) -> &[f32] {
        let n = self.dims[0] * self.dims[1];
        &self.voxels[d * n..(d + 1) * n]
    }
}

pub(crate) fn min_max(values: &[f32]) -> (f32, f32) {
    values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// An ordered band of depth slices taken from one volume.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceStack {
    /// `(rows, cols)` of every slice.
    pub side: (usize, usize),
    pub slices: Vec<Vec<f32>>,
    /// Depth positions in the source volume, strictly increasing.
    pub depth_indices: Vec<usize>,
    pub label: Option<Label>,
    pub provenance: Provenance,
}

impl SliceStack {
    pub fn new(
        side: (usize, usize),
        slices: Vec<Vec<f32>>,
        depth_indices: Vec<usize>,
        label: Option<Label>,
        provenance: Provenance,
    ) -> Result<Self> {
        let px = side.0 * side.1;
        if slices.is_empty() || slices.iter().any(|s| s.len() != px) {
            return Err(Error::Shape(format!("every slice must hold {px} pixels")));
        }
        if depth_indices.len() != slices.len() || depth_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("depth indices must be strictly increasing, one per slice".into()));
        }
        Ok(SliceStack {
            side,
            slices,
            depth_indices,
            label,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Depth indices form one run without gaps.
    pub fn is_contiguous(&self) -> bool {
        self.depth_indices.windows(2).all(|w| w[1] == w[0] + 1)
    }

    /// `[rows, cols, depth]` layout, the classifier's input order.
    pub fn to_volume_layout(&self) -> Vec<f32> {
        let (h, w) = self.side;
        let depth = self.slices.len();
        let mut out = vec![0.0; h * w * depth];
        for (d, s) in self.slices.iter().enumerate() {
            for (p, &v) in s.iter().enumerate() {
                out[p * depth + d] = v;
            }
        }
        out
    }

    pub fn from_volume_layout(
        side: (usize, usize),
        depth: usize,
        values: &[f32],
        label: Option<Label>,
        provenance: Provenance,
    ) -> Result<Self> {
        let px = side.0 * side.1;
        if values.len() != px * depth || depth == 0 {
            return Err(Error::Shape(format!(
                "{} values for a {}x{}x{depth} stack",
                values.len(),
                side.0,
                side.1
            )));
        }
        let slices = (0..depth)
            .map(|d| (0..px).map(|p| values[p * depth + d]).collect())
            .collect();
        SliceStack::new(side, slices, (0..depth).collect(), label, provenance)
    }

    /// Mean over all pixels of all slices.
    pub fn mean(&self) -> f64 {
        let n: usize = self.slices.iter().map(Vec::len).sum();
        self.slices.iter().flatten().map(|&v| v as f64).sum::<f64>() / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_round_trip() {
        let slices = vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]];
        let s = SliceStack::new((2, 2), slices, vec![3, 4], Some(Label::Normal), Provenance::Real).unwrap();
        let flat = s.to_volume_layout();
        assert_eq!(flat, vec![1.0, 5.0, 2.0, 6.0, 3.0, 7.0, 4.0, 8.0]);
        let back = SliceStack::from_volume_layout((2, 2), 2, &flat, s.label, s.provenance).unwrap();
        assert_eq!(back.slices, s.slices);
    }

    #[test]
    fn indices_must_increase() {
        assert!(SliceStack::new((1, 1), vec![vec![0.0], vec![0.0]], vec![2, 2], None, Provenance::Real).is_err());
        assert!(Volume::new([2, 2, 2], vec![0.0; 7], None, Provenance::Real).is_err());
    }
}
