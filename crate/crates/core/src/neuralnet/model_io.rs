//! `QNN1` model files.
//!
//! Layout (little-endian): magic `QNN1`, `u32` version, `u32` input rank and
//! dims, `u32` layer count, one tagged record per layer, `u32` parameter
//! array count, then each parameter array as `u32` rank, `u32` dims and its
//! `f64` values in declaration order.

use std::fs;
use std::path::Path;

use super::array::ArrayND;
use super::layer::{Layer, LayerSpec};
use super::network::Network;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 4] = b"QNN1";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_network(net: &Network) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION as usize);
    put_u32(&mut buf, net.input_shape().len());
    for &d in net.input_shape() {
        put_u32(&mut buf, d);
    }
    put_u32(&mut buf, net.len());
    for spec in net.specs() {
        match *spec {
            LayerSpec::Conv2d {
                kernel,
                out_maps,
                stride,
            } => {
                buf.push(0);
                for v in [kernel[0], kernel[1], out_maps, stride] {
                    put_u32(&mut buf, v);
                }
            }
            LayerSpec::TransposeConv2d {
                kernel,
                out_maps,
                stride,
            } => {
                buf.push(1);
                for v in [kernel[0], kernel[1], out_maps, stride] {
                    put_u32(&mut buf, v);
                }
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                buf.push(2);
                for v in [kernel[0], kernel[1], stride] {
                    put_u32(&mut buf, v);
                }
            }
            LayerSpec::Dense { out_units } => {
                buf.push(3);
                put_u32(&mut buf, out_units);
            }
            LayerSpec::Dropout { drop_rate } => {
                buf.push(4);
                buf.extend_from_slice(&drop_rate.to_le_bytes());
            }
            LayerSpec::Reshape { dims } => {
                buf.push(5);
                for v in dims {
                    put_u32(&mut buf, v);
                }
            }
            LayerSpec::Relu => buf.push(6),
            LayerSpec::Linear => buf.push(7),
            LayerSpec::Affine { scale, shift } => {
                buf.push(8);
                buf.extend_from_slice(&scale.to_le_bytes());
                buf.extend_from_slice(&shift.to_le_bytes());
            }
        }
    }
    let params: Vec<&ArrayND> = net.params().collect();
    put_u32(&mut buf, params.len());
    for p in params {
        put_u32(&mut buf, p.shape().len());
        for &d in p.shape() {
            put_u32(&mut buf, d);
        }
        for v in p.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "model",
        reason: reason.into(),
    }
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
            .ok_or_else(|| bad("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let rank = self.u32()?;
        if rank > 8 {
            return Err(bad(format!("implausible rank {rank}")));
        }
        (0..rank).map(|_| self.u32()).collect()
    }
}

pub fn decode_network(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let input = r.dims()?;
    let n_layers = r.u32()?;
    let mut specs = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let spec = match r.u8()? {
            0 | 1 => {
                let tag = r.bytes[r.pos - 1];
                let (kh, kw, out_maps, stride) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                if tag == 0 {
                    LayerSpec::Conv2d { kernel: [kh, kw], out_maps, stride }
                } else {
                    LayerSpec::TransposeConv2d { kernel: [kh, kw], out_maps, stride }
                }
            }
            2 => LayerSpec::MaxPool2d {
                kernel: [r.u32()?, r.u32()?],
                stride: r.u32()?,
            },
            3 => LayerSpec::Dense { out_units: r.u32()? },
            4 => LayerSpec::Dropout { drop_rate: r.f64()? },
            5 => LayerSpec::Reshape {
                dims: [r.u32()?, r.u32()?, r.u32()?],
            },
            6 => LayerSpec::Relu,
            7 => LayerSpec::Linear,
            8 => LayerSpec::Affine {
                scale: r.f64()?,
                shift: r.f64()?,
            },
            t => return Err(bad(format!("unknown layer tag {t}"))),
        };
        specs.push(spec);
    }
    let mut net = Network::new(&input, specs)?;
    let expected: Vec<Vec<usize>> = net.params().map(|p| p.shape().to_vec()).collect();
    let count = r.u32()?;
    if count != expected.len() {
        return Err(bad(format!(
            "{count} parameter arrays stored, layers declare {}",
            expected.len()
        )));
    }
    let mut arrays = Vec::with_capacity(count);
    for (i, want) in expected.iter().enumerate() {
        let shape = r.dims()?;
        if &shape != want {
            return Err(Error::Shape(format!(
                "parameter array {i}: stored shape {shape:?}, layer expects {want:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        arrays.push(ArrayND::from_vec(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    for (dst, src) in net.params_mut().zip(arrays) {
        *dst = src;
    }
    let layers: Vec<Layer> = net.layers().to_vec();
    Ok(Network::from_layers(input, layers))
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    write_atomic(path, &encode_network(net))
}

pub fn load_network(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_net() -> Network {
        Network::seeded(
            &[1, 4, 4],
            vec![
                LayerSpec::conv(3, 2, 1),
                LayerSpec::Relu,
                LayerSpec::dropout(0.2),
                LayerSpec::max_pool(2, 2),
                LayerSpec::dense(8),
                LayerSpec::Reshape { dims: [2, 2, 2] },
                LayerSpec::transpose_conv(3, 1, 2),
                LayerSpec::Affine { scale: 2.5, shift: -0.25 },
                LayerSpec::Linear,
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let net = sample_net();
        let back = decode_network(&encode_network(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_shape_mismatch_and_truncation() {
        let net = sample_net();
        let bytes = encode_network(&net);
        assert!(decode_network(&bytes[..bytes.len() - 1]).is_err());

        // patch the first conv's out_maps from 2 to 3 so stored weights no longer fit
        let mut patched = bytes.clone();
        let header = 4 + 4 + 4 + 3 * 4 + 4 + 1;
        let at = header + 8;
        patched[at..at + 4].copy_from_slice(&3u32.to_le_bytes());
        assert!(decode_network(&patched).is_err());

        let mut wrong_magic = bytes;
        wrong_magic[3] = b'2';
        assert!(decode_network(&wrong_magic).is_err());
    }
}
