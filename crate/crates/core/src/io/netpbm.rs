//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GrayImage;

/// Parses the whitespace-separated header tokens, skipping `#` comments.
/// Returns the tokens and the offset of the first payload byte.
fn header(bytes: &[u8], count: usize, kind: &'static str) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::format(kind, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the payload.
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, kind: &'static str) -> Result<usize> {
    tok.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::format(kind, format!("bad extent {tok:?}")))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (t, off) = header(bytes, 4, "PGM")?;
    if t[0] != "P5" {
        return Err(Error::format("PGM", format!("expected P5 magic, found {:?}", t[0])));
    }
    let w = parse_dim(&t[1], "PGM")?;
    let h = parse_dim(&t[2], "PGM")?;
    if t[3] != "255" {
        return Err(Error::format("PGM", format!("only maxval 255 is supported, found {}", t[3])));
    }
    let payload = bytes
        .get(off..off + w * h)
        .ok_or_else(|| Error::format("PGM", "payload shorter than width x height"))?;
    GrayImage::new(w, h, payload.iter().map(|&b| b as f32 / 255.0).collect())
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// An 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (t, off) = header(bytes, 4, "PPM")?;
    if t[0] != "P6" || t[3] != "255" {
        return Err(Error::format("PPM", "expected P6 with maxval 255"));
    }
    let width = parse_dim(&t[1], "PPM")?;
    let height = parse_dim(&t[2], "PPM")?;
    let payload = bytes
        .get(off..off + 3 * width * height)
        .ok_or_else(|| Error::format("PPM", "payload too short"))?;
    Ok(RgbImage {
        width,
        height,
        pixels: payload.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}

pub fn write_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_of_quantized_values() {
        let img = GrayImage::from_fn(7, 3, |x, y| ((x * 31 + y * 17) % 256) as f32 / 255.0);
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn ppm_round_trip() {
        let img = RgbImage {
            width: 2,
            height: 1,
            pixels: vec![[1, 2, 3], [250, 0, 9]],
        };
        assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }
}
