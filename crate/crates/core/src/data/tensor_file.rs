//! Binary tensor files.
//!
//! Layout (little-endian):
//! - magic: `b"MFT1"`
//! - rank: u32
//! - dims: rank * u32
//! - payload: f32 * product(dims), row-major
//!
//! A rank-0 file holds a single scalar.

use std::path::Path;

use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MFT1";

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let rank = u32::try_from(t.rank()).map_err(|_| Error::dim("rank exceeds u32"))?;
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rank.to_le_bytes());
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::dim(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a tensor file image. `path` is only used in error messages.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let err = |message: String| Error::TensorFormat {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 8 {
        return Err(err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(err(format!("bad magic {:?}", &bytes[..4])));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let rank = u32_at(4) as usize;
    let header = rank
        .checked_mul(4)
        .and_then(|n| n.checked_add(8))
        .ok_or_else(|| err("rank overflow".into()))?;
    if bytes.len() < header {
        return Err(err(format!(
            "truncated dims: rank {rank}, {} bytes",
            bytes.len()
        )));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut numel: usize = 1;
    for i in 0..rank {
        let d = u32_at(8 + 4 * i) as usize;
        if d == 0 {
            return Err(err(format!("zero extent at axis {i}")));
        }
        numel = numel
            .checked_mul(d)
            .ok_or_else(|| err("dimension product overflows".into()))?;
        shape.push(d);
    }
    let payload_len = numel
        .checked_mul(4)
        .ok_or_else(|| err("dimension product overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() < payload_len {
        return Err(err(format!(
            "truncated payload: expected {payload_len} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > payload_len {
        return Err(err(format!(
            "{} trailing bytes after payload",
            payload.len() - payload_len
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(shape, data)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::io(format!("reading tensor {}", path.display()), e))?;
    decode_tensor(&bytes, path)
}

/// Writes via a temporary file and rename. Values are stored as `f32`.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    write_atomic(path, &encode_tensor(t)?)
}
