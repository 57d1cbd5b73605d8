//! Binary checkpoint container.
//!
//! ```text
//! magic "SPCK" | u32 format version | 32-byte config digest | u32 count
//! count × { u32 name length | name (UTF-8) | u32 ndim | ndim × u64 dim | u64 offset }
//! payload: f64 little-endian values, tensor after tensor
//! ```
//!
//! All integers are little-endian; `offset` counts f64 values from the start
//! of the payload.

use std::path::Path;

use indexmap::IndexMap;

use super::{ModelConfig, ModelParameters};
use crate::autodiff::Tensor;
use crate::error::{write_file, Error, Result};

pub const MAGIC: &[u8; 4] = b"SPCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_digest: [u8; 32],
    pub params: ModelParameters,
}

pub fn encode_checkpoint(params: &ModelParameters, config_digest: [u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_digest);
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &params.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.numel() as u64;
    }
    for t in params.tensors.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("format version {version}, expected {FORMAT_VERSION}"));
    }
    let config_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let count = r.u32()? as usize;
    let mut index = Vec::with_capacity(count.min(1 << 16));
    let mut expected_offset = 0u64;
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "tensor name is not UTF-8".to_string())?;
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(format!("{name}: implausible rank {ndim}"));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let offset = r.u64()?;
        if offset != expected_offset {
            return Err(format!("{name}: offset {offset}, expected {expected_offset}"));
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| format!("{name}: shape overflows"))?;
        expected_offset += numel as u64;
        index.push((name.to_string(), shape, numel));
    }
    let mut tensors = IndexMap::with_capacity(index.len());
    for (name, shape, numel) in index {
        let raw = r.take(numel.checked_mul(8).ok_or("payload overflows")?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(shape, data).map_err(|e| format!("{name}: {e}"))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(format!("duplicate tensor {name}"));
        }
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Checkpoint { config_digest, params: ModelParameters { tensors } })
}

pub fn save_checkpoint(params: &ModelParameters, config: &ModelConfig, path: &Path) -> Result<()> {
    write_file(path, encode_checkpoint(params, config.digest()))
}

/// Read any checkpoint without checking it against a configuration.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|message| Error::Checkpoint { path: path.into(), message })
}

/// Read a checkpoint and require its tensors to match `config`.
pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ModelParameters> {
    let ck = read_checkpoint(path)?;
    ck.params.check_against(config).map_err(|e| Error::Checkpoint {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(ck.params)
}
