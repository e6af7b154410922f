//! Network checkpoints: a small binary format holding the layer list with
//! parameters as little-endian f64, so a saved f64 net reloads bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"EXNN";
const VERSION: u16 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV2D: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_AVGPOOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;

fn push_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| Error::InvalidShape(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_tensor<S: Scalar>(out: &mut Vec<u8>, t: &Tensor<S>) -> Result<()> {
    let dims = t.shape();
    if dims.len() > 255 {
        return Err(Error::InvalidShape(format!(
            "checkpoint tensors support up to 255 dimensions, got {}",
            dims.len()
        )));
    }
    out.push(dims.len() as u8);
    for &d in dims {
        push_u32(out, d, "tensor dimension")?;
    }
    for &v in t.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    Ok(())
}

/// Serializes the layer list to `path`.
pub fn save_network<S: Scalar>(path: &Path, net: &Network<S>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    push_u32(&mut out, net.layers().len(), "layer count")?;
    for layer in net.layers() {
        match layer {
            Layer::Dense { weights, bias } => {
                out.push(TAG_DENSE);
                push_tensor(&mut out, weights)?;
                push_tensor(&mut out, bias)?;
            }
            Layer::Conv2d {
                kernels,
                bias,
                stride,
            } => {
                out.push(TAG_CONV2D);
                push_tensor(&mut out, kernels)?;
                push_tensor(&mut out, bias)?;
                push_u32(&mut out, *stride, "stride")?;
            }
            Layer::ReLU => out.push(TAG_RELU),
            Layer::AvgPool { window } => {
                out.push(TAG_AVGPOOL);
                push_u32(&mut out, *window, "pool window")?;
            }
            Layer::Flatten => out.push(TAG_FLATTEN),
        }
    }
    fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            format: "exnn",
            path: self.path.display().to_string(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated at byte {} (need {} more)",
                self.pos, n
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn tensor<S: Scalar>(&mut self) -> Result<Tensor<S>> {
        let ndim = self.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(self.u32()?);
        }
        let len: usize = dims.iter().product();
        let raw = self.take(len * 8)?;
        let data: Vec<S> = raw
            .chunks_exact(8)
            .map(|c| S::of_f64(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Tensor::from_vec(&dims, data)
    }
}

/// Reads a network back from a file written by [`save_network`].
pub fn load_network<S: Scalar>(path: &Path) -> Result<Network<S>> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let tag = r.u8()?;
        let layer = match tag {
            TAG_DENSE => Layer::Dense {
                weights: r.tensor()?,
                bias: r.tensor()?,
            },
            TAG_CONV2D => Layer::Conv2d {
                kernels: r.tensor()?,
                bias: r.tensor()?,
                stride: r.u32()?,
            },
            TAG_RELU => Layer::ReLU,
            TAG_AVGPOOL => Layer::AvgPool { window: r.u32()? },
            TAG_FLATTEN => Layer::Flatten,
            other => return Err(r.fail(format!("unknown layer tag {other} at layer {i}"))),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!(
            "{} trailing bytes after layer list",
            bytes.len() - r.pos
        )));
    }
    Network::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::randomize_biases;
    use tempfile::tempdir;

    fn layer_bits(net: &Network<f64>) -> Vec<Vec<u64>> {
        net.layers()
            .iter()
            .map(|l| match l {
                Layer::Dense { weights, bias } => weights
                    .data()
                    .iter()
                    .chain(bias.data())
                    .map(|v| v.to_bits())
                    .collect(),
                Layer::Conv2d { kernels, bias, .. } => kernels
                    .data()
                    .iter()
                    .chain(bias.data())
                    .map(|v| v.to_bits())
                    .collect(),
                _ => Vec::new(),
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.exnn");
        let mut net = Network::<f64>::conv_net((3, 12, 12), 4, 5).unwrap();
        randomize_biases(&mut net, 0.1, 6);
        save_network(&path, &net).unwrap();
        let back: Network<f64> = load_network(&path).unwrap();
        assert_eq!(net.layers().len(), back.layers().len());
        assert_eq!(layer_bits(&net), layer_bits(&back));
        for (a, b) in net.layers().iter().zip(back.layers()) {
            assert_eq!(a.kind(), b.kind());
        }
    }

    #[test]
    fn f32_networks_survive_the_f64_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net32.exnn");
        let net = Network::<f32>::conv_net((1, 10, 10), 2, 9).unwrap();
        save_network(&path, &net).unwrap();
        let back: Network<f32> = load_network(&path).unwrap();
        let bits = |n: &Network<f32>| -> Vec<u32> {
            n.layers()
                .iter()
                .flat_map(|l| match l {
                    Layer::Dense { weights, bias } => weights
                        .data()
                        .iter()
                        .chain(bias.data())
                        .map(|v| v.to_bits())
                        .collect::<Vec<_>>(),
                    Layer::Conv2d { kernels, bias, .. } => kernels
                        .data()
                        .iter()
                        .chain(bias.data())
                        .map(|v| v.to_bits())
                        .collect(),
                    _ => Vec::new(),
                })
                .collect()
        };
        assert_eq!(bits(&net), bits(&back));
    }

    #[test]
    fn corrupted_files_are_rejected_with_a_reason() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.exnn");
        let net = Network::<f64>::conv_net((1, 10, 10), 2, 0).unwrap();
        save_network(&path, &net).unwrap();
        let good = fs::read(&path).unwrap();

        let cases: Vec<(&str, Vec<u8>)> = vec![
            ("bad magic", {
                let mut b = good.clone();
                b[0] = b'X';
                b
            }),
            ("unsupported version", {
                let mut b = good.clone();
                b[4] = 9;
                b
            }),
            ("truncated", good[..good.len() - 3].to_vec()),
            ("trailing bytes", {
                let mut b = good.clone();
                b.push(0);
                b
            }),
        ];
        for (label, bytes) in cases {
            fs::write(&path, &bytes).unwrap();
            let err = load_network::<f64>(&path).unwrap_err();
            assert_eq!(err.category(), "format", "case {label}: {err}");
        }
    }

    #[test]
    fn unknown_layer_tag_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.exnn");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(77);
        fs::write(&path, &bytes).unwrap();
        let err = load_network::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("unknown layer tag 77"), "{err}");
    }
}
