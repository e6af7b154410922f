//! On-disk heatmap store. Layout, all little-endian after the magic:
//! magic `EXHM`, format version (u16), map count (u32), side (u32), then per
//! map a sample index (u32), a target class (u32), and `side * side` f64
//! values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::HeatmapSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"EXHM";
const VERSION: u16 = 1;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        format: "EXHM",
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn save_heatmaps<S: Scalar>(set: &HeatmapSet<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(set.len() as u32).to_le_bytes())?;
    w.write_all(&(set.side as u32).to_le_bytes())?;
    for i in 0..set.len() {
        w.write_all(&(set.sample_indices[i] as u32).to_le_bytes())?;
        w.write_all(&(set.targets[i] as u32).to_le_bytes())?;
        for &v in set.vector(i) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_heatmaps<S: Scalar>(path: impl AsRef<Path>) -> Result<HeatmapSet<S>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if &magic != MAGIC {
        return Err(format_err(path, format!("bad magic {:?}", magic)));
    }
    let version = read_u16(&mut r, path, "version")?;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {}", version)));
    }
    let count = read_u32(&mut r, path, "count")? as usize;
    let side = read_u32(&mut r, path, "side")? as usize;
    if side == 0 {
        return Err(format_err(path, "side is zero"));
    }

    let mut sample_indices = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    let mut maps = Tensor::zeros(&[count, side, side]);
    let mut buf = [0u8; 8];
    for i in 0..count {
        sample_indices.push(read_u32(&mut r, path, "sample index")? as usize);
        targets.push(read_u32(&mut r, path, "target")? as usize);
        let row = maps.sample_mut(i);
        for v in row.iter_mut() {
            read_exact(&mut r, &mut buf, path, "map payload")?;
            *v = S::of_f64(f64::from_le_bytes(buf));
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(format_err(path, "trailing bytes after last map"));
    }
    Ok(HeatmapSet {
        side,
        sample_indices,
        targets,
        maps,
    })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| format_err(path, format!("truncated while reading {}", what)))
}

fn read_u16(r: &mut impl Read, path: &Path, what: &str) -> Result<u16> {
    let mut buf = [0u8; 2];
    read_exact(r, &mut buf, path, what)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path, what)?;
    Ok(u32::from_le_bytes(buf))
}

/// Writes one map as an 8-bit binary PGM, min-max normalized; a constant map
/// comes out all black.
pub fn write_pgm(path: impl AsRef<Path>, side: usize, values: &[f64]) -> Result<()> {
    if values.len() != side * side {
        return Err(Error::InvalidShape(format!(
            "PGM payload of {} values does not fill a {}x{} image",
            values.len(),
            side,
            side
        )));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write!(w, "P5\n{} {}\n255\n", side, side)?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
