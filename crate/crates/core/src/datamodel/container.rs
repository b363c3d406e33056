//! The `TSR1` tensor container.
//!
//! ```text
//! offset  size     field
//! 0       4        magic "TSR1"
//! 4       1        rank r (u8, >= 1)
//! 5       4*r      dims, u32 little-endian
//! 5+4r    4*prod   values, f32 little-endian, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TSR1";

/// Serializes a tensor into container bytes.
pub fn encode(dims: &[usize], values: &[f32]) -> Result<Vec<u8>> {
    if dims.is_empty() {
        return Err(Error::Shape("tensor container needs rank >= 1".into()));
    }
    if dims.len() > u8::MAX as usize {
        return Err(Error::Shape(format!("rank {} exceeds 255", dims.len())));
    }
    let n: usize = dims.iter().product();
    if n != values.len() {
        return Err(Error::Shape(format!(
            "dims {dims:?} need {n} values, got {}",
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(5 + 4 * dims.len() + 4 * n);
    out.extend_from_slice(&MAGIC);
    out.push(dims.len() as u8);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Shape(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses container bytes; `path` is used only for error reporting.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(5));
    }
    if bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    let Some(&rank) = bytes.get(4) else {
        return Err(truncated(5));
    };
    if rank == 0 {
        return Err(Error::ZeroRank {
            path: path.to_path_buf(),
        });
    }
    let header = 5 + 4 * rank as usize;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let dims: Vec<usize> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().product();
    let expected = header + 4 * n;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            bytes.len() - expected
        )));
    }
    let values = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, values))
}

pub fn write_tensor(path: impl AsRef<Path>, dims: &[usize], values: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(dims, values)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `f64` values, rounding each to `f32`.
pub fn write_tensor_f64(path: impl AsRef<Path>, dims: &[usize], values: &[f64]) -> Result<()> {
    let v: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    write_tensor(path, dims, &v)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn read_tensor_f64(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f64>)> {
    let (dims, v) = read_tensor(path)?;
    Ok((dims, v.into_iter().map(f64::from).collect()))
}
