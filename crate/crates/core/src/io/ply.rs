//! ASCII PLY point clouds (`element vertex`, float `x y z`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

pub fn encode_ply(points: &[Point3<f64>]) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    );
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
    }
    s
}

pub fn decode_ply(text: &str) -> Result<Vec<Point3<f64>>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::format("PLY", "missing ply magic"));
    }
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = lines.next().ok_or_else(|| Error::format("PLY", "missing end_header"))?.trim();
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(Error::format("PLY", format!("only ascii PLY is supported, found {fmt}")))
            }
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::format("PLY", "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| Error::format("PLY", "no vertex element"))?;
    let pos = |n: &str| {
        props
            .iter()
            .position(|p| p == n)
            .ok_or_else(|| Error::format("PLY", format!("vertex has no {n} property")))
    };
    let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| Error::format("PLY", "fewer vertices than declared"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("PLY", format!("bad vertex line {line:?}")))?;
        if vals.len() < props.len() {
            return Err(Error::format("PLY", "vertex line too short"));
        }
        points.push(Point3::new(vals[ix], vals[iy], vals[iz]));
    }
    Ok(points)
}

pub fn write_ply(points: &[Point3<f64>], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ply(points))?;
    Ok(())
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<Point3<f64>>> {
    decode_ply(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32_precision() {
        let pts = vec![Point3::new(0.5, -1.25, 3.0), Point3::new(0.1, 0.2, 0.3)];
        let back = decode_ply(&encode_ply(&pts)).unwrap();
        for (a, b) in pts.iter().zip(&back) {
            assert!((a - b).norm() < 1e-7);
        }
    }

    #[test]
    fn reads_extra_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float nx\nproperty float x\nproperty float y\nproperty float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n9 1 2 3\n";
        assert_eq!(decode_ply(text).unwrap(), vec![Point3::new(1.0, 2.0, 3.0)]);
        assert!(decode_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    }
}
