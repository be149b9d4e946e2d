//! Raw little-endian `f32` field exchange format.
//!
//! Layout: magic `BFK1`, then `u32` width, `u32` height, `u32` reserved
//! (zero), then `width * height` samples in row-major order.

use std::path::Path;

use super::{Field, ScalarField};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"BFK1";
const HEADER_LEN: usize = 16;

pub fn encode_raw<F: Field>(field: &F) -> Result<Vec<u8>> {
    let width = u32::try_from(field.width())
        .map_err(|_| Error::InvalidData("width exceeds u32".into()))?;
    let height = u32::try_from(field.height())
        .map_err(|_| Error::InvalidData("height exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * field.values().len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in field.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<ScalarField> {
    if bytes.len() < HEADER_LEN || !bytes.starts_with(RAW_MAGIC) {
        return Err(Error::Header("not a BFK1 raw field".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height) = (word(4), word(8));
    if width == 0 || height == 0 {
        return Err(Error::ZeroSize);
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Header("dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(Error::Header(format!(
            "expected {} payload bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    ScalarField::new(width, height, data)
}

pub fn write_raw<F: Field>(field: &F, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_raw(field)?).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes)
}
