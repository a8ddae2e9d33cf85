//! Model file.
//!
//! ```text
//! magic "TFMODEL\0" | version u32 | kind u8 (0 cnn, 1 lstm) | context u8 (0 none, 1 concat)
//! seed u64 | config echo (u32 len + utf-8)
//! manifest: count u32, then per layer: name (u32 len + utf-8) | ndims u8 | dims u32...
//! payload: count u64, then f64 values in manifest order
//! crc32 of all preceding bytes
//! ```
//! Everything little-endian.

use super::{ContextMode, ModelError, ModelKind};
use crate::codec::{ByteReader, ByteWriter};

pub const MODEL_MAGIC: &[u8; 8] = b"TFMODEL\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Serialized form of a predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub context_mode: ContextMode,
    /// `(name, shape)` for every parameter tensor, in payload order.
    pub manifest: Vec<(String, Vec<usize>)>,
    pub payload: Vec<f64>,
    pub seed: u64,
    pub config_echo: String,
}

pub fn save(p: &ModelParams) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_FORMAT_VERSION);
    w.u8(p.kind.tag());
    w.u8(p.context_mode.tag());
    w.u64(p.seed);
    w.str(&p.config_echo);
    w.u32(p.manifest.len() as u32);
    for (name, shape) in &p.manifest {
        w.str(name);
        w.u8(shape.len() as u8);
        for &d in shape {
            w.u32(d as u32);
        }
    }
    w.u64(p.payload.len() as u64);
    for &v in &p.payload {
        w.f64(v);
    }
    w.finish_with_checksum()
}

pub fn load(bytes: &[u8]) -> Result<ModelParams, ModelError> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(ModelError::Format("not a model file (bad magic)".into()));
    }
    let mut r = ByteReader::with_checksum(bytes)?;
    r.take(MODEL_MAGIC.len())?;
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
    }
    let kind = ModelKind::from_tag(r.u8()?).ok_or_else(|| ModelError::Format("unknown model kind".into()))?;
    let context_mode = ContextMode::from_tag(r.u8()?).ok_or_else(|| ModelError::Format("unknown context mode".into()))?;
    let seed = r.u64()?;
    let config_echo = r.str()?.to_string();
    let layers = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(layers);
    for _ in 0..layers {
        let name = r.str()?.to_string();
        let ndims = r.u8()? as usize;
        let shape = (0..ndims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        manifest.push((name, shape));
    }
    let count = r.u64()? as usize;
    let expected: usize = manifest.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if count != expected {
        return Err(ModelError::ManifestMismatch(format!("payload of {count} values, manifest describes {expected}")));
    }
    let payload = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    if !r.is_empty() {
        return Err(ModelError::Format("trailing bytes after payload".into()));
    }
    Ok(ModelParams { kind, context_mode, manifest, payload, seed, config_echo })
}
