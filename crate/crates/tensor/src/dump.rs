//! Raw tensor dump: little-endian `rank: u32`, `rank` dims as `u32`, then the
//! elements as little-endian IEEE floats.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn encode<T: Scalar>(tensor: &Tensor<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.reserve(tensor.len() * T::BYTES);
    for &v in tensor.data() {
        v.to_le_bytes_vec(out);
    }
}

pub fn to_bytes<T: Scalar>(tensor: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::new();
    encode(tensor, &mut out);
    out
}

pub fn write<T: Scalar, W: Write>(tensor: &Tensor<T>, mut w: W) -> std::io::Result<()> {
    w.write_all(&to_bytes(tensor))
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let end = *pos + 4;
    let chunk = bytes
        .get(*pos..end)
        .ok_or_else(|| TensorError::Dump(format!("truncated at byte {}", *pos)))?;
    *pos = end;
    Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
}

/// Decodes one tensor starting at `*pos`, advancing `*pos` past it.
pub fn decode<T: Scalar>(bytes: &[u8], pos: &mut usize) -> Result<Tensor<T>> {
    let rank = read_u32(bytes, pos)? as usize;
    if rank > 16 {
        return Err(TensorError::Dump(format!("implausible rank {rank}")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(bytes, pos).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len: usize = shape.iter().product();
    let end = *pos + len * T::BYTES;
    let payload = bytes.get(*pos..end).ok_or_else(|| {
        TensorError::Dump(format!("payload needs {} bytes, {} available", len * T::BYTES, bytes.len() - *pos))
    })?;
    *pos = end;
    let data = payload.chunks_exact(T::BYTES).map(T::from_le_slice).collect();
    if rank == 0 {
        let v: Vec<T> = data;
        return Ok(Tensor::scalar(v[0]));
    }
    Tensor::new(shape, data)
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut pos = 0;
    let t = decode(bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(TensorError::Dump(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(t)
}

pub fn read<T: Scalar, R: Read>(mut r: R) -> Result<Tensor<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| TensorError::Dump(e.to_string()))?;
    from_bytes(&bytes)
}
