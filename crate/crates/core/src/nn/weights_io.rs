//! Binary weight files.
//!
//! Layout (little-endian): magic `MPSW`, format version `u32`, fusion mode `u8`,
//! layer count `u32`, then for every layer its kernel tensor followed by its
//! bias tensor, each as rank `u32`, extents `u32[rank]`, `f32` payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::layers::ConvLayer;
use super::network::{Fusion, NetworkWeights};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MPSW";
const VERSION: u32 = 1;
const LAYERS: u32 = 5;

fn write_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_weights(w: &NetworkWeights<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * w.param_count() + 128);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(w.fusion.tag());
    out.extend_from_slice(&LAYERS.to_le_bytes());
    for l in w.layers() {
        write_tensor(&mut out, &l.kernels);
        write_tensor(&mut out, &l.bias);
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::format("weights", "unexpected end of file"));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::format("weights", format!("unsupported tensor rank {rank}")));
        }
        let dims = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format("weights", "tensor too large"))?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(&dims, data)
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<NetworkWeights<f32>> {
    let mut c = Cursor { buf: bytes };
    if c.take(4)? != MAGIC {
        return Err(Error::format("weights", "bad magic, expected MPSW"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format("weights", format!("unsupported version {version}")));
    }
    let fusion = Fusion::from_tag(c.take(1)?[0])?;
    let count = c.u32()?;
    if count != LAYERS {
        return Err(Error::format("weights", format!("expected {LAYERS} layers, found {count}")));
    }
    let mut layers = Vec::with_capacity(5);
    for _ in 0..LAYERS {
        let k = c.tensor()?;
        let b = c.tensor()?;
        layers.push(ConvLayer::from_parts(k, b)?);
    }
    if !c.buf.is_empty() {
        return Err(Error::format("weights", "trailing bytes after last tensor"));
    }
    let mut it = layers.into_iter();
    let branch = [it.next().unwrap(), it.next().unwrap()];
    let head = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
    let c2 = branch[1].out_channels();
    let n_views = match fusion {
        Fusion::Concat => {
            let f = head[0].in_channels();
            if f % c2 != 0 {
                return Err(Error::format("weights", "concat head width is not a multiple of the branch width"));
            }
            f / c2
        }
        // Not stored; any n >= 2 is accepted at inference.
        Fusion::Mean => 5,
    };
    let w = NetworkWeights {
        branch,
        head,
        fusion,
        n_views,
    };
    w.validate()?;
    Ok(w)
}

pub fn save_weights(w: &NetworkWeights<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_weights(w))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights<f32>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_weights(&buf)
}
