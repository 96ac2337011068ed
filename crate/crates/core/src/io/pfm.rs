//! Single-channel PFM (`Pf`). Written little-endian (scale -1.0) with rows
//! stored bottom-to-top as the format requires.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

impl FloatMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!("{width}x{height} map needs {} values", width * height)));
        }
        Ok(FloatMap { width, height, data })
    }
}

pub fn encode_pfm(map: &FloatMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    for row in map.data.chunks_exact(map.width).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<FloatMap> {
    let mut lines = Vec::new();
    let mut i = 0;
    while lines.len() < 3 {
        let start = i;
        while i < bytes.len() && bytes[i] != b'\n' {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(Error::format("PFM", "truncated header"));
        }
        let line = String::from_utf8_lossy(&bytes[start..i]).trim().to_string();
        i += 1;
        if !line.is_empty() {
            lines.push(line);
        }
    }
    if lines[0] != "Pf" {
        return Err(Error::format("PFM", format!("expected grayscale Pf, found {:?}", lines[0])));
    }
    let dims: Vec<usize> = lines[1]
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format("PFM", "bad extents"))?;
    let [width, height] = dims[..] else {
        return Err(Error::format("PFM", "bad extents"));
    };
    let scale: f32 = lines[2].parse().map_err(|_| Error::format("PFM", "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM", "scale must be non-zero"));
    }
    let little = scale < 0.0;
    let payload = bytes
        .get(i..i + 4 * width * height)
        .ok_or_else(|| Error::format("PFM", "payload too short"))?;
    let mut rows: Vec<Vec<f32>> = payload
        .chunks_exact(4 * width.max(1))
        .map(|row| {
            row.chunks_exact(4)
                .map(|c| {
                    let b: [u8; 4] = c.try_into().unwrap();
                    if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }
                })
                .collect()
        })
        .collect();
    rows.reverse();
    FloatMap::new(width, height, rows.concat())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<FloatMap> {
    decode_pfm(&fs::read(path)?)
}

pub fn write_pfm(map: &FloatMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pfm(map))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_bit_exact(w in 1usize..9, h in 1usize..9, seed in any::<u32>()) {
            let data: Vec<f32> = (0..w * h).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 977) & 0x7f7f_ffff)).collect();
            let map = FloatMap::new(w, h, data).unwrap();
            let back = decode_pfm(&encode_pfm(&map)).unwrap();
            prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), map.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bottom_row_is_stored_first() {
        let map = FloatMap::new(1, 2, vec![1.0, 2.0]).unwrap();
        let b = encode_pfm(&map);
        let hdr = b"Pf\n1 2\n-1.0\n".len();
        assert_eq!(f32::from_le_bytes(b[hdr..hdr + 4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn big_endian_input() {
        let mut b = b"Pf\n1 1\n1.0\n".to_vec();
        b.extend_from_slice(&3.5f32.to_be_bytes());
        assert_eq!(decode_pfm(&b).unwrap().data, vec![3.5]);
    }
}
