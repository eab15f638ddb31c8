//! Feature matrix file.
//!
//! Little-endian layout:
//!
//! | offset | size        | field                         |
//! |--------|-------------|-------------------------------|
//! | 0      | 8           | magic `SCENFEAT`              |
//! | 8      | 4           | u32 version (1)               |
//! | 12     | 4           | u32 n_rows                    |
//! | 16     | 4           | u32 dim                       |
//! | 20     | 4·rows·dim  | f32 values, row-major         |
//!
//! Values are widened to f64 on load and narrowed to f32 on save.

use scen_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SCENFEAT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const N_ROWS_OFFSET: usize = 12;

pub fn encode(features: &Tensor) -> Vec<u8> {
    let (rows, dim) = (features.rows(), features.cols());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * features.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for &v in features.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Features {
        offset,
        msg: msg.into(),
    }
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| err(offset, "file ends inside the header"))?;
    Ok(u32::from_le_bytes(b.try_into().unwrap()))
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < MAGIC.len() || &bytes[..8] != MAGIC {
        return Err(err(0, "missing SCENFEAT magic"));
    }
    let version = u32_at(bytes, 8)?;
    if version != VERSION {
        return Err(err(8, format!("unsupported version {version}")));
    }
    let rows = u32_at(bytes, N_ROWS_OFFSET)? as usize;
    let dim = u32_at(bytes, 16)? as usize;
    if rows == 0 || dim == 0 {
        return Err(err(N_ROWS_OFFSET, format!("empty matrix {rows}x{dim}")));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = rows * dim * 4;
    if payload.len() != expected {
        return Err(err(
            HEADER_LEN + payload.len().min(expected),
            format!("payload holds {} bytes, header implies {expected}", payload.len()),
        ));
    }
    let mut data = Vec::with_capacity(rows * dim);
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(err(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        data.push(v as f64);
    }
    Ok(Tensor::new(vec![rows, dim], data)?)
}
