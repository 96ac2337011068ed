use nalgebra::Point3;
use serde::{Deserialize, Serialize};

/// Procedural albedo defined in world space, so every view sees the same surface pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Texture {
    /// Fractal value noise; `scale` is the base frequency in cycles per metre.
    Noise { scale: f64, octaves: u32, contrast: f64 },
    /// 3D checkerboard with cells of `size` metres.
    Checker { size: f64, contrast: f64 },
    /// Smooth sinusoidal ramp; weakly textured.
    Gradient { scale: f64, contrast: f64 },
}

impl Default for Texture {
    fn default() -> Self {
        Texture::Noise {
            scale: 50.0,
            octaves: 3,
            contrast: 0.45,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let h = splitmix(seed ^ splitmix((ix as u64) ^ splitmix((iy as u64) ^ splitmix(iz as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise in `[0, 1)`.
fn value_noise(p: [f64; 3], seed: u64) -> f64 {
    let f = p.map(f64::floor);
    let i = f.map(|v| v as i64);
    let t = [smooth(p[0] - f[0]), smooth(p[1] - f[1]), smooth(p[2] - f[2])];
    let mut acc = 0.0;
    for corner in 0..8 {
        let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
        let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
            * (if dy == 1 { t[1] } else { 1.0 - t[1] })
            * (if dz == 1 { t[2] } else { 1.0 - t[2] });
        acc += w * lattice(i[0] + dx, i[1] + dy, i[2] + dz, seed);
    }
    acc
}

impl Texture {
    pub fn validate(&self) -> Result<(), String> {
        let (scale, contrast) = match *self {
            Texture::Noise { scale, octaves, contrast } => {
                if octaves == 0 || octaves > 8 {
                    return Err(format!("noise octaves must be in 1..=8, got {octaves}"));
                }
                (scale, contrast)
            }
            Texture::Checker { size, contrast } => (size, contrast),
            Texture::Gradient { scale, contrast } => (scale, contrast),
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err("texture scale must be positive".into());
        }
        if !(0.0..=0.5).contains(&contrast) {
            return Err(format!("texture contrast must be in [0, 0.5], got {contrast}"));
        }
        Ok(())
    }

    /// Albedo in `[0, 1]` at a world point.
    pub fn albedo(&self, p: &Point3<f64>, seed: u64) -> f64 {
        let v = match *self {
            Texture::Noise { scale, octaves, contrast } => {
                let (mut sum, mut amp, mut norm, mut freq) = (0.0, 1.0, 0.0, scale);
                for o in 0..octaves {
                    sum += amp * value_noise([p.x * freq, p.y * freq, p.z * freq], seed.wrapping_add(o as u64));
                    norm += amp;
                    amp *= 0.5;
                    freq *= 2.0;
                }
                // Value noise clusters near 0.5; stretch it before applying the contrast.
                0.5 + contrast * (2.5 * (sum / norm - 0.5)).clamp(-1.0, 1.0)
            }
            Texture::Checker { size, contrast } => {
                let parity = ((p.x / size).floor() + (p.y / size).floor() + (p.z / size).floor()) as i64;
                if parity.rem_euclid(2) == 0 { 0.5 + contrast } else { 0.5 - contrast }
            }
            Texture::Gradient { scale, contrast } => 0.5 + contrast * (scale * (p.x + 0.7 * p.y + 0.3 * p.z)).sin(),
        };
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn albedo_is_bounded_and_deterministic() {
        let t = Texture::default();
        for i in 0..500 {
            let p = Point3::new(i as f64 * 0.013, (i * 7 % 11) as f64 * 0.02, 0.7);
            let a = t.albedo(&p, 3);
            assert!((0.0..=1.0).contains(&a));
            assert_eq!(a, t.albedo(&p, 3));
        }
    }

    #[test]
    fn noise_is_continuous() {
        let t = Texture::default();
        let p = Point3::new(0.1234, 0.2345, 0.8);
        let q = Point3::new(0.1234 + 1e-7, 0.2345, 0.8);
        assert!((t.albedo(&p, 1) - t.albedo(&q, 1)).abs() < 1e-4);
    }

    #[test]
    fn checker_alternates() {
        let t = Texture::Checker { size: 0.1, contrast: 0.3 };
        let a = t.albedo(&Point3::new(0.05, 0.05, 0.05), 0);
        let b = t.albedo(&Point3::new(0.15, 0.05, 0.05), 0);
        assert_eq!((a, b), (0.8, 0.2));
    }
}
