//! Camera text files: one block per camera, 16 whitespace-separated numbers
//! `fx fy cx cy`, the row-major world-to-camera rotation (9 values) and the
//! translation (3 values). Lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Intrinsics, Pose};

pub fn encode_cameras(cams: &[Camera]) -> String {
    let mut s = String::from("# fx fy cx cy | R (row-major, world-to-camera) | t\n");
    for c in cams {
        let k = &c.intrinsics;
        let _ = writeln!(s, "{} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        let r = c.pose.rotation();
        for i in 0..3 {
            let _ = writeln!(s, "{} {} {}", r[(i, 0)], r[(i, 1)], r[(i, 2)]);
        }
        let t = c.pose.translation();
        let _ = writeln!(s, "{} {} {}\n", t.x, t.y, t.z);
    }
    s
}

pub fn decode_cameras(text: &str) -> Result<Vec<Camera>> {
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| Error::format("camera", format!("bad number {t:?}"))))
        .collect::<Result<_>>()?;
    if values.is_empty() || values.len() % 16 != 0 {
        return Err(Error::format(
            "camera",
            format!("expected blocks of 16 numbers, found {} values", values.len()),
        ));
    }
    values
        .chunks_exact(16)
        .enumerate()
        .map(|(i, v)| {
            let k = Intrinsics::new(v[0], v[1], v[2], v[3]);
            let r = Matrix3::from_row_slice(&v[4..13]);
            let t = Vector3::new(v[13], v[14], v[15]);
            let pose = Pose::new(r, t);
            match (k, pose) {
                (Ok(k), Ok(p)) => Ok(Camera::new(k, p)),
                (Err(e), _) | (_, Err(e)) => Err(Error::format("camera", format!("camera {i}: {e}"))),
            }
        })
        .collect()
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    decode_cameras(&fs::read_to_string(path)?)
}

pub fn write_cameras(cams: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_cameras(cams))?;
    Ok(())
}
