//! Binary checkpoint codec.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"ICEVIT01"
//! u32 header_len, header_len bytes of UTF-8 JSON {"config": .., "meta": ..}
//! repeated per tensor, in canonical parameter order:
//!     u32 name_len, name bytes, u32 ndim, u32 dims[ndim], f32 data[prod(dims)]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::layout;
use super::{Result, ViTConfig, ViTParams, VitError};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ICEVIT01";

/// Training provenance stored next to the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub steps: u64,
    pub loss: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ViTConfig,
    pub meta: CheckpointMeta,
    pub params: ViTParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ViTConfig,
    meta: CheckpointMeta,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        config: ckpt.config.clone(),
        meta: ckpt.meta.clone(),
    })
    .map_err(|e| VitError::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + 4 * ckpt.params.count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, header.len());
    out.extend_from_slice(&header);
    for (name, tensor) in ckpt.params.named(&ckpt.config) {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, tensor.rank());
        for &d in tensor.shape() {
            put_u32(&mut out, d);
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(VitError::Format("bad magic".into()));
    }
    let header_len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(header_len)?).map_err(|e| VitError::Format(format!("header: {e}")))?;
    header.config.validate().map_err(|e| VitError::Format(e.to_string()))?;

    let mut tensors = Vec::new();
    for (name, shape) in layout(&header.config) {
        let name_len = r.u32()? as usize;
        let got =
            std::str::from_utf8(r.take(name_len)?).map_err(|_| VitError::Format("tensor name is not UTF-8".into()))?;
        if got != name {
            return Err(VitError::Format(format!("expected tensor {name}, found {got}")));
        }
        let ndim = r.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims != shape {
            return Err(VitError::Format(format!(
                "{name}: stored shape {dims:?} does not match config shape {shape:?}"
            )));
        }
        let n: usize = dims.iter().product();
        let data = r
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(dims, data)?);
    }
    if r.pos != bytes.len() {
        return Err(VitError::Format(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        params: ViTParams::from_ordered(&header.config, tensors)?,
        config: header.config,
        meta: header.meta,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    std::fs::write(path, bytes).map_err(|source| VitError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|source| VitError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| VitError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
