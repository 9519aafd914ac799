//! 8-bit binary PGM export for eyeballing slices.

use std::path::Path;

use crate::error::{Error, Result};

/// Linear `[-1, 1] -> [0, 255]`, clamped.
pub fn to_gray(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

/// `P5` image of a row-major `rows x cols` grid.
pub fn encode(values: &[f32], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if values.len() != rows * cols {
        return Err(Error::Shape(format!("{} values for a {rows}x{cols} image", values.len())));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_gray(v)));
    Ok(out)
}

pub fn write(path: &Path, values: &[f32], rows: usize, cols: usize) -> Result<()> {
    std::fs::write(path, encode(values, rows, cols)?).map_err(|e| Error::io(path, e))
}
