//! Checkpoint layout, all integers little-endian `u32`:
//!
//! ```text
//! "SGCK" version kind_tag layer_count
//! per layer: param_count, then per param: name_len name_bytes tensor_dump
//! ```
//!
//! The encoding depends only on parameter values, so identical models give
//! identical bytes.

use std::path::Path;

use slicegan_tensor::dump;

use super::graph::{ModelGraph, ModelKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SGCK";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &ModelGraph) -> Result<Vec<u8>> {
    if !model.is_initialized() {
        return Err(Error::Checkpoint("model has no parameters".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, model.kind.tag(), model.layers().len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for params in model.params() {
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            dump::encode(&p.tensor, &mut out);
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let chunk = bytes
        .get(*pos..*pos + 4)
        .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {pos}")))?;
    *pos += 4;
    Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
}

/// Loads parameters into `model`, which must have the same architecture
/// (kind, layer count, parameter names and shapes).
pub fn load_into(model: &mut ModelGraph, bytes: &[u8]) -> Result<()> {
    if bytes.get(..4) != Some(MAGIC) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut pos = 4;
    let version = read_u32(bytes, &mut pos)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = ModelKind::from_tag(read_u32(bytes, &mut pos)?);
    if kind != Some(model.kind) {
        return Err(Error::Checkpoint(format!("checkpoint holds {kind:?}, model is {:?}", model.kind)));
    }
    let layers = read_u32(bytes, &mut pos)? as usize;
    if layers != model.layers().len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {layers} layers, model has {}",
            model.layers().len()
        )));
    }
    if !model.is_initialized() {
        model.init_params(0)?;
    }
    for (i, params) in model.params_mut().iter_mut().enumerate() {
        let count = read_u32(bytes, &mut pos)? as usize;
        if count != params.len() {
            return Err(Error::Checkpoint(format!("layer {i}: {count} params, expected {}", params.len())));
        }
        for p in params.iter_mut() {
            let len = read_u32(bytes, &mut pos)? as usize;
            let name = bytes
                .get(pos..pos + len)
                .ok_or_else(|| Error::Checkpoint("truncated name".into()))?;
            pos += len;
            if name != p.name.as_bytes() {
                return Err(Error::Checkpoint(format!(
                    "layer {i}: found param {:?}, expected {}",
                    String::from_utf8_lossy(name),
                    p.name
                )));
            }
            let t = dump::decode::<f32>(bytes, &mut pos)?;
            if t.shape() != p.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "layer {i} {}: shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.tensor.shape()
                )));
            }
            p.tensor = t;
        }
    }
    if pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(())
}

pub fn save(model: &ModelGraph, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(model: &mut ModelGraph, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_into(model, &bytes)
}
