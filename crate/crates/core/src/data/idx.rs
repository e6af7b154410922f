use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Maps `[0, 1]` to a byte by rounding `v * 255`; out-of-range input clamps.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Inverse of [`quantize`] up to quantization error: `byte / 255`.
pub fn dequantize(b: u8) -> f64 {
    b as f64 / 255.0
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        format: "idx",
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes an unsigned-byte array in the idx layout: a magic word
/// `0x00 0x00 0x08 ndims`, each dimension as a big-endian u32, then the
/// row-major payload.
pub fn write_idx_u8(path: &Path, dims: &[usize], data: &[u8]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(Error::InvalidShape(format!(
            "idx dims {:?} need {} bytes, got {}",
            dims,
            expected,
            data.len()
        )));
    }
    if dims.is_empty() || dims.len() > 255 {
        return Err(Error::InvalidShape(format!(
            "idx supports 1 to 255 dimensions, got {}",
            dims.len()
        )));
    }
    let mut bytes = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    bytes.extend_from_slice(&[0, 0, 0x08, dims.len() as u8]);
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidShape(format!("idx dimension {d} exceeds u32")))?;
        bytes.extend_from_slice(&d.to_be_bytes());
    }
    bytes.extend_from_slice(data);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads an unsigned-byte idx file back into its dimensions and payload.
pub fn read_idx_u8(path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(format_err(path, "truncated header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(path, "bad magic prefix"));
    }
    if bytes[2] != 0x08 {
        return Err(format_err(
            path,
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(format_err(path, "zero dimensions"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(format_err(path, "truncated dimension list"));
    }
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        let off = 4 + 4 * i;
        let d = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap());
        dims.push(d as usize);
    }
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(format_err(
            path,
            format!(
                "payload holds {} bytes but dims {:?} need {}",
                payload.len(),
                dims,
                expected
            ),
        ));
    }
    Ok((dims, payload.to_vec()))
}
