//! Minimal NIfTI-1 reader and writer: 3-D/4-D uncompressed images with
//! uint8, int16 or float32 voxels.

use thiserror::Error;

use super::preprocess::normalize_unit;
use super::types::{min_max, Volume};
use crate::labels::Provenance;

pub const HEADER_SIZE: usize = 348;
/// Header plus the four-byte extension flag of a single-file image.
pub const SINGLE_FILE_OFFSET: usize = 352;

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_MAGIC: usize = 344;

#[derive(Debug, Error, PartialEq)]
pub enum NiftiError {
    #[error("nifti: input too short for a header ({0} bytes)")]
    TooShort(usize),
    #[error("nifti: sizeof_hdr is {0}, expected 348 in either byte order")]
    HeaderSize(i32),
    #[error("nifti: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("nifti: dim[0] is {0}, only 3-D and 4-D images are supported")]
    DimCount(i16),
    #[error("nifti: dim[{index}] is {value}, must be positive")]
    BadDim { index: usize, value: i16 },
    #[error("nifti: unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("nifti: bitpix {bitpix} does not match datatype {datatype}")]
    Bitpix { datatype: i16, bitpix: i16 },
    #[error("nifti: vox_offset {0} is invalid")]
    VoxOffset(f32),
    #[error("nifti: payload truncated, need {needed} bytes but have {available}")]
    Truncated { needed: usize, available: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub little_endian: bool,
}

impl NiftiHeader {
    /// `(front, top, depth)`.
    pub fn dims(&self) -> [usize; 3] {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    /// Separate header/image pair (`.hdr` + `.img`).
    pub fn is_pair(&self) -> bool {
        &self.magic == b"ni1\0"
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    little: bool,
}

impl Reader<'_> {
    fn take<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[at..at + N]);
        if !self.little {
            b.reverse();
        }
        b
    }
    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.take(at))
    }
    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.take(at))
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::TooShort(bytes.len()));
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let little = match (le, i32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"))) {
        (348, _) => true,
        (_, 348) => false,
        _ => return Err(NiftiError::HeaderSize(le)),
    };
    let r = Reader { bytes, little };
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[OFF_MAGIC..OFF_MAGIC + 4]);
    if &magic != b"n+1\0" && &magic != b"ni1\0" {
        return Err(NiftiError::BadMagic(magic));
    }
    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = r.i16(OFF_DIM + 2 * i);
    }
    if !(3..=4).contains(&dim[0]) {
        return Err(NiftiError::DimCount(dim[0]));
    }
    for (index, &value) in dim.iter().enumerate().take(dim[0] as usize + 1).skip(1) {
        if value <= 0 {
            return Err(NiftiError::BadDim { index, value });
        }
    }
    let datatype = r.i16(OFF_DATATYPE);
    let bitpix = r.i16(OFF_BITPIX);
    let expected_bits = match datatype {
        DT_UINT8 => 8,
        DT_INT16 => 16,
        DT_FLOAT32 => 32,
        other => return Err(NiftiError::UnsupportedDatatype(other)),
    };
    if bitpix != expected_bits {
        return Err(NiftiError::Bitpix { datatype, bitpix });
    }
    let vox_offset = r.f32(OFF_VOX_OFFSET);
    let single = &magic == b"n+1\0";
    if !vox_offset.is_finite() || vox_offset < 0.0 || (single && vox_offset < SINGLE_FILE_OFFSET as f32) {
        return Err(NiftiError::VoxOffset(vox_offset));
    }
    Ok(NiftiHeader {
        sizeof_hdr: 348,
        dim,
        datatype,
        bitpix,
        vox_offset,
        scl_slope: r.f32(OFF_SCL_SLOPE),
        scl_inter: r.f32(OFF_SCL_INTER),
        magic,
        little_endian: little,
    })
}

/// Decoded voxels of the first 3-D volume, scaled but not normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub header: NiftiHeader,
    pub values: Vec<f32>,
}

fn decode_payload(header: &NiftiHeader, payload: &[u8]) -> Result<Vec<f32>, NiftiError> {
    let n: usize = header.dims().iter().product();
    let width = header.bitpix as usize / 8;
    let needed = n * width;
    if payload.len() < needed {
        return Err(NiftiError::Truncated {
            needed,
            available: payload.len(),
        });
    }
    let r = Reader {
        bytes: payload,
        little: header.little_endian,
    };
    let mut values: Vec<f32> = match header.datatype {
        DT_UINT8 => payload[..n].iter().map(|&b| b as f32).collect(),
        DT_INT16 => (0..n).map(|i| r.i16(2 * i) as f32).collect(),
        _ => (0..n).map(|i| r.f32(4 * i)).collect(),
    };
    let (slope, inter) = (header.scl_slope, header.scl_inter);
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && !(slope == 1.0 && inter == 0.0) {
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    Ok(values)
}

/// Single-file (`n+1`) image without intensity normalization.
pub fn read_nifti(bytes: &[u8]) -> Result<RawImage, NiftiError> {
    let header = parse_header(bytes)?;
    let offset = header.vox_offset as usize;
    if header.is_pair() || bytes.len() < offset {
        return Err(NiftiError::Truncated {
            needed: offset.max(SINGLE_FILE_OFFSET),
            available: bytes.len(),
        });
    }
    let values = decode_payload(&header, &bytes[offset..])?;
    Ok(RawImage { header, values })
}

/// Header/image pair (`ni1`); the payload starts at `vox_offset` within the
/// image bytes.
pub fn read_nifti_pair(header_bytes: &[u8], image_bytes: &[u8]) -> Result<RawImage, NiftiError> {
    let header = parse_header(header_bytes)?;
    let offset = header.vox_offset as usize;
    if image_bytes.len() < offset {
        return Err(NiftiError::Truncated {
            needed: offset,
            available: image_bytes.len(),
        });
    }
    let values = decode_payload(&header, &image_bytes[offset..])?;
    Ok(RawImage { header, values })
}

impl RawImage {
    /// Unlabeled real volume with intensities mapped to `[-1, 1]`.
    pub fn into_volume(self) -> Volume {
        let dims = self.header.dims();
        let mut voxels = self.values;
        let range = min_max(&voxels);
        normalize_unit(&mut voxels);
        Volume {
            dims,
            voxels,
            label: None,
            provenance: Provenance::Real,
            intensity_range: range,
        }
    }
}

/// Parses a single-file image and normalizes it to `[-1, 1]`.
pub fn parse_nifti(bytes: &[u8]) -> Result<Volume, NiftiError> {
    Ok(read_nifti(bytes)?.into_volume())
}

/// Little-endian float32 single-file image, slope 1 and intercept 0.
pub fn write_nifti(volume: &Volume) -> Vec<u8> {
    let mut out = vec![0u8; SINGLE_FILE_OFFSET + 4 * volume.voxels.len()];
    let mut put = |at: usize, b: &[u8]| out[at..at + b.len()].copy_from_slice(b);
    put(0, &348i32.to_le_bytes());
    let dim = [3, volume.dims[0] as i16, volume.dims[1] as i16, volume.dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put(OFF_DIM + 2 * i, &d.to_le_bytes());
    }
    put(OFF_DATATYPE, &DT_FLOAT32.to_le_bytes());
    put(OFF_BITPIX, &32i16.to_le_bytes());
    for i in 0..8 {
        put(OFF_PIXDIM + 4 * i, &1.0f32.to_le_bytes());
    }
    put(OFF_VOX_OFFSET, &(SINGLE_FILE_OFFSET as f32).to_le_bytes());
    put(OFF_SCL_SLOPE, &1.0f32.to_le_bytes());
    put(OFF_SCL_INTER, &0.0f32.to_le_bytes());
    put(OFF_MAGIC, b"n+1\0");
    for (i, v) in volume.voxels.iter().enumerate() {
        put(SINGLE_FILE_OFFSET + 4 * i, &v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled header, independent of `write_nifti`.
    fn fixture(dims: [i16; 3], datatype: i16, bitpix: i16, slope: f32, inter: f32, big: bool, payload: &[u8]) -> Vec<u8> {
        let mut b = vec![0u8; 352];
        let w16 = |b: &mut Vec<u8>, at: usize, v: i16| {
            let x = if big { v.to_be_bytes() } else { v.to_le_bytes() };
            b[at..at + 2].copy_from_slice(&x);
        };
        let w32 = |b: &mut Vec<u8>, at: usize, x: [u8; 4], xb: [u8; 4]| {
            b[at..at + 4].copy_from_slice(if big { &xb } else { &x });
        };
        w32(&mut b, 0, 348i32.to_le_bytes(), 348i32.to_be_bytes());
        for (i, v) in [3, dims[0], dims[1], dims[2], 1, 1, 1, 1].into_iter().enumerate() {
            w16(&mut b, 40 + 2 * i, v);
        }
        w16(&mut b, 70, datatype);
        w16(&mut b, 72, bitpix);
        w32(&mut b, 108, 352f32.to_le_bytes(), 352f32.to_be_bytes());
        w32(&mut b, 112, slope.to_le_bytes(), slope.to_be_bytes());
        w32(&mut b, 116, inter.to_le_bytes(), inter.to_be_bytes());
        b[344..348].copy_from_slice(b"n+1\0");
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn constant_float_volume_maps_to_minus_one() {
        let bytes = fixture([4, 4, 4], DT_FLOAT32, 32, 0.0, 0.0, false, &[0u8; 256]);
        let v = parse_nifti(&bytes).unwrap();
        assert_eq!(v.dims, [4, 4, 4]);
        assert!(v.voxels.iter().all(|&x| x == -1.0));
    }

    #[test]
    fn int16_slope_and_intercept() {
        let payload: Vec<u8> = [0i16, 100].iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes = fixture([2, 1, 1], DT_INT16, 16, 2.0, 0.0, false, &payload);
        let raw = read_nifti(&bytes).unwrap();
        assert_eq!(raw.values, vec![0.0, 200.0]);
        let v = raw.into_volume();
        assert_eq!(v.voxels, vec![-1.0, 1.0]);
        assert_eq!(v.intensity_range, (0.0, 200.0));
    }

    #[test]
    fn big_endian_is_detected() {
        let payload: Vec<u8> = [3i16, -7].iter().flat_map(|v| v.to_be_bytes()).collect();
        let bytes = fixture([1, 2, 1], DT_INT16, 16, 1.0, 0.0, true, &payload);
        let raw = read_nifti(&bytes).unwrap();
        assert!(!raw.header.little_endian);
        assert_eq!(raw.values, vec![3.0, -7.0]);
    }

    #[test]
    fn uint8_zero_slope_is_unscaled() {
        let bytes = fixture([3, 1, 1], DT_UINT8, 8, 0.0, 5.0, false, &[1, 2, 255]);
        assert_eq!(read_nifti(&bytes).unwrap().values, vec![1.0, 2.0, 255.0]);
    }

    #[test]
    fn distinct_errors() {
        let good = fixture([2, 2, 2], DT_FLOAT32, 32, 1.0, 0.0, false, &[0u8; 32]);

        let mut b = good.clone();
        b[344..348].copy_from_slice(b"xxx\0");
        assert_eq!(parse_nifti(&b).unwrap_err(), NiftiError::BadMagic(*b"xxx\0"));

        let mut b = good.clone();
        b[70..72].copy_from_slice(&64i16.to_le_bytes());
        assert_eq!(parse_nifti(&b).unwrap_err(), NiftiError::UnsupportedDatatype(64));

        let mut b = good.clone();
        b[40..42].copy_from_slice(&2i16.to_le_bytes());
        assert_eq!(parse_nifti(&b).unwrap_err(), NiftiError::DimCount(2));

        let b = &good[..good.len() - 1];
        assert_eq!(
            parse_nifti(b).unwrap_err(),
            NiftiError::Truncated {
                needed: 32,
                available: 31
            }
        );

        let mut b = good.clone();
        b[0..4].copy_from_slice(&100i32.to_le_bytes());
        assert_eq!(parse_nifti(&b).unwrap_err(), NiftiError::HeaderSize(100));

        assert_eq!(parse_nifti(&good[..100]).unwrap_err(), NiftiError::TooShort(100));
    }

    #[test]
    fn four_dimensional_reads_first_volume() {
        let mut b = fixture([1, 1, 2], DT_UINT8, 8, 1.0, 0.0, false, &[7, 9, 11, 13]);
        b[40..42].copy_from_slice(&4i16.to_le_bytes());
        b[48..50].copy_from_slice(&2i16.to_le_bytes());
        assert_eq!(read_nifti(&b).unwrap().values, vec![7.0, 9.0]);
    }

    #[test]
    fn header_image_pair() {
        let mut hdr = fixture([2, 1, 1], DT_UINT8, 8, 1.0, 0.0, false, &[]);
        hdr.truncate(348);
        hdr[344..348].copy_from_slice(b"ni1\0");
        hdr[108..112].copy_from_slice(&0f32.to_le_bytes());
        let raw = read_nifti_pair(&hdr, &[4, 6]).unwrap();
        assert_eq!(raw.values, vec![4.0, 6.0]);
        assert!(read_nifti(&hdr).is_err());
    }
}
