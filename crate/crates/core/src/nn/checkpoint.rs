//! Binary model checkpoints, little-endian:
//! `"SARM"`, u32 version, u32 config length, config JSON, u32 tensor count,
//! then per tensor u32 rank, rank × u32 dims, f32 values. Tensors are the
//! parameters followed by the normalization running statistics, in layout
//! order.

use std::io::Write;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SARM";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_CONFIG_BYTES: usize = 1 << 20;

pub fn write_checkpoint<W: Write>(model: &Model<f32>, mut out: W) -> Result<()> {
    let config = serde_json::to_vec(model.config())?;
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);
    let tensors: Vec<&Vec<f32>> = model.params().iter().chain(model.buffers()).collect();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (slot, data) in model.slots().zip(tensors) {
        buf.extend_from_slice(&(slot.shape.len() as u32).to_le_bytes());
        for &d in &slot.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a checkpoint, checking every tensor against the layout implied
/// by the stored configuration. Momentum buffers start at zero.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Model<f32>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let len = c.u32()? as usize;
    if len > MAX_CONFIG_BYTES {
        return Err(Error::format("checkpoint", "config block too large"));
    }
    let config: ModelConfig = serde_json::from_slice(c.take(len)?)
        .map_err(|e| Error::format("checkpoint", format!("config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::format("checkpoint", format!("config: {e}")))?;
    let expected = config.tensor_shapes();
    let values: usize = expected.iter().map(|s| s.iter().product::<usize>()).sum();
    if values.saturating_mul(4) > bytes.len() - c.pos {
        return Err(Error::format("checkpoint", "truncated"));
    }
    let mut model = Model::<f32>::new(config, 0)?;
    let count = c.u32()? as usize;
    if count != expected.len() {
        return Err(Error::format(
            "checkpoint",
            format!("{count} tensors, layout has {}", expected.len()),
        ));
    }
    let mut tensors = Vec::with_capacity(count);
    for (i, shape) in expected.iter().enumerate() {
        let rank = c.u32()? as usize;
        if rank != shape.len() {
            return Err(Error::format("checkpoint", format!("tensor {i}: rank {rank}, expected {}", shape.len())));
        }
        for &d in shape {
            let got = c.u32()? as usize;
            if got != d {
                return Err(Error::format("checkpoint", format!("tensor {i}: shape mismatch")));
            }
        }
        let n: usize = shape.iter().product();
        let raw = c.take(n * 4)?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect(),
        );
    }
    if c.pos != bytes.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    model.load_tensors(tensors)?;
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
