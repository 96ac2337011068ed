//! Patch cache: magic `MPSP`, then `count`, `n`, `side` as little-endian
//! u32, then per sample a label byte and `n * side * side` f32 values.

use std::fs;
use std::path::Path;

use super::PatchSample;
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MPSP";

pub fn encode_patch_cache(samples: &[PatchSample]) -> Result<Vec<u8>> {
    ensure!(!samples.is_empty(), InvalidArgument, "nothing to cache");
    let n = samples[0].patches.len();
    let (_, side, _) = samples[0].patches[0].chw()?;
    let mut out = Vec::with_capacity(16 + samples.len() * (1 + 4 * n * side * side));
    out.extend_from_slice(MAGIC);
    for v in [samples.len(), n, side] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for s in samples {
        ensure!(
            s.patches.len() == n && s.patches.iter().all(|p| p.dims() == [1, side, side]),
            Shape,
            "all cached samples must have {n} patches of {side}x{side}"
        );
        out.push(s.label);
        for p in &s.patches {
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_patch_cache(bytes: &[u8]) -> Result<Vec<PatchSample>> {
    let bad = |msg: &str| Error::format("patch cache", msg.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing MPSP header"));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (count, n, side) = (u(4), u(8), u(12));
    if n < 2 || side == 0 {
        return Err(bad("invalid view count or side"));
    }
    let floats = n * side * side;
    let record = 1 + 4 * floats;
    if bytes.len() != 16 + count * record {
        return Err(bad("file size does not match header"));
    }
    bytes[16..]
        .chunks_exact(record)
        .map(|r| {
            let label = r[0];
            if label > 1 {
                return Err(bad("label must be 0 or 1"));
            }
            let vals: Vec<f32> = r[1..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let patches = vals
                .chunks_exact(side * side)
                .map(|c| Tensor::from_vec(&[1, side, side], c.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Ok(PatchSample {
                patches,
                label,
                pixel: (0, 0),
                plane: 0,
            })
        })
        .collect()
}

pub fn write_patch_cache(samples: &[PatchSample], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_patch_cache(samples)?)?;
    Ok(())
}

pub fn read_patch_cache(path: impl AsRef<Path>) -> Result<Vec<PatchSample>> {
    decode_patch_cache(&fs::read(path)?)
}
