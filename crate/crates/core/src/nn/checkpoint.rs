//! Model checkpoints.
//!
//! Little-endian: magic `DOAM`, version u16, JSON spec length u32, the JSON
//! `ModelSpec`, then every parameter tensor in declaration order as f32.

use std::fs;
use std::path::Path;

use super::model::{Model, ModelSpec};
use super::tensor::Tensor;
use crate::error::{Error, IoContext, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DOAM";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let spec = serde_json::to_vec(&model.spec)?;
    let mut out = Vec::with_capacity(10 + spec.len() + 4 * model.spec.param_count());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    for t in &model.params {
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let truncated = |detail: String| Error::Truncated { what: "checkpoint", detail };
    if bytes.len() < 10 {
        return Err(truncated(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            what: "checkpoint",
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            what: "checkpoint",
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let spec_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let spec_end = 10usize
        .checked_add(spec_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| truncated(format!("spec block of {spec_len} bytes runs past the end")))?;
    let spec: ModelSpec = serde_json::from_slice(&bytes[10..spec_end])?;
    spec.validate()?;
    let body = &bytes[spec_end..];
    let need = 4 * spec.param_count();
    if body.len() != need {
        return Err(truncated(format!("{} parameter bytes, spec needs {need}", body.len())));
    }
    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let params = spec
        .param_shapes()
        .iter()
        .map(|shape| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, values.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Model::from_params(spec, params)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?).context(|| format!("writing checkpoint {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).context(|| format!("reading checkpoint {}", path.display()))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and checks it against the shape a run expects.
pub fn load_checkpoint_for(path: &Path, mics: usize, bands: usize, classes: usize) -> Result<Model> {
    let model = load_checkpoint(path)?;
    let s = &model.spec;
    if (s.mics, s.bands, s.classes) != (mics, bands, classes) {
        return Err(Error::Shape(format!(
            "checkpoint is M={} K={} I={}, run expects M={mics} K={bands} I={classes}",
            s.mics, s.bands, s.classes
        )));
    }
    Ok(model)
}
