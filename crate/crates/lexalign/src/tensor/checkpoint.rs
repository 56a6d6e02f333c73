//! Checkpoint container: format version, opaque config block, named tensors
//! with raw little-endian float payloads, RNG state, and a step counter.

use super::{Real, Tensor, TensorError};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"LXCP";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub config_json: String,
    pub entries: Vec<(String, Tensor<T>)>,
    pub rng_state: (u64, u64),
    pub step: u64,
}

pub fn write_checkpoint<T: Real>(path: &Path, ckpt: &Checkpoint<T>) -> Result<(), TensorError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = ckpt.config_json.as_bytes();
    buf.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    buf.extend_from_slice(cfg);
    buf.extend_from_slice(&ckpt.rng_state.0.to_le_bytes());
    buf.extend_from_slice(&ckpt.rng_state.1.to_le_bytes());
    buf.extend_from_slice(&ckpt.step.to_le_bytes());
    buf.extend_from_slice(&(ckpt.entries.len() as u32).to_le_bytes());
    for (name, tensor) in &ckpt.entries {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(T::WIDTH);
        buf.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            v.write_le(&mut buf);
        }
    }
    let mut f = fs::File::create(path)
        .map_err(|e| TensorError::Checkpoint(format!("create {}: {e}", path.display())))?;
    f.write_all(&buf)
        .map_err(|e| TensorError::Checkpoint(format!("write {}: {e}", path.display())))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        if self.pos + n > self.buf.len() {
            return Err(TensorError::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, TensorError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, TensorError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn u64(&mut self) -> Result<u64, TensorError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }
}

/// Read a checkpoint, converting stored payloads to the requested precision.
pub fn read_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>, TensorError> {
    let buf = fs::read(path)
        .map_err(|e| TensorError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let cfg_len = c.u64()? as usize;
    let config_json = String::from_utf8(c.take(cfg_len)?.to_vec())
        .map_err(|_| TensorError::Checkpoint("config block is not utf-8".into()))?;
    let rng_state = (c.u64()?, c.u64()?);
    let step = c.u64()?;
    let n_entries = c.u32()? as usize;
    let mut entries = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let name_len = c.u32()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| TensorError::Checkpoint("entry name is not utf-8".into()))?;
        let dtype = c.u8()?;
        let ndim = c.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data: Vec<T> = match dtype {
            4 => {
                let raw = c.take(numel * 4)?;
                raw.chunks_exact(4)
                    .map(|b| T::from64(f32::read_le(b).to64()))
                    .collect()
            }
            8 => {
                let raw = c.take(numel * 8)?;
                raw.chunks_exact(8).map(|b| T::from64(f64::read_le(b))).collect()
            }
            other => return Err(TensorError::Checkpoint(format!("unknown dtype {other}"))),
        };
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(Checkpoint { config_json, entries, rng_state, step })
}
