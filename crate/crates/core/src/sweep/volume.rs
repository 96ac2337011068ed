use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::io::FloatMap;

/// `D x H x W` max-oriented scores, one slice per plane depth.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    depths: Vec<f64>,
    scores: Vec<f32>,
    valid: Vec<bool>,
}

impl CostVolume {
    pub fn new(width: usize, height: usize, depths: Vec<f64>, scores: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height * depths.len();
        ensure!(!depths.is_empty(), InvalidArgument, "cost volume needs at least one depth");
        ensure!(
            scores.len() == n && valid.len() == n,
            Shape,
            "{}x{}x{} volume needs {n} cells",
            depths.len(),
            height,
            width
        );
        ensure!(
            scores.iter().zip(&valid).all(|(s, &v)| !v || s.is_finite()),
            InvalidArgument,
            "valid cells must hold finite scores"
        );
        Ok(CostVolume {
            width,
            height,
            depths,
            scores,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane_count(&self) -> usize {
        self.depths.len()
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, plane: usize, x: usize, y: usize) -> usize {
        (plane * self.height + y) * self.width + x
    }

    pub fn slice(&self, plane: usize) -> (&[f32], &[bool]) {
        let n = self.width * self.height;
        (&self.scores[plane * n..(plane + 1) * n], &self.valid[plane * n..(plane + 1) * n])
    }

    /// One slice as a float map with invalid cells set to NaN.
    pub fn slice_map(&self, plane: usize) -> FloatMap {
        let (s, v) = self.slice(plane);
        let data = s.iter().zip(v).map(|(&s, &v)| if v { s } else { f32::NAN }).collect();
        FloatMap::new(self.width, self.height, data).expect("slice extents")
    }

    /// `a * s + b` applied to every valid score.
    pub fn affine(&self, a: f32, b: f32) -> CostVolume {
        let mut out = self.clone();
        for (s, &v) in out.scores.iter_mut().zip(&self.valid) {
            if v {
                *s = a * *s + b;
            }
        }
        out
    }
}

/// Per-pixel depth estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub confidence: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            depth: vec![0.0; width * height],
            confidence: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Depth from a float map; zero and non-finite values are invalid.
    pub fn from_float_map(map: &FloatMap) -> Self {
        let valid: Vec<bool> = map.data.iter().map(|&d| d.is_finite() && d > 0.0).collect();
        DepthMap {
            width: map.width,
            height: map.height,
            depth: map.data.iter().zip(&valid).map(|(&d, &v)| if v { d as f64 } else { 0.0 }).collect(),
            confidence: vec![0.0; map.data.len()],
            valid,
        }
    }

    /// Depth as a float map, 0 where invalid.
    pub fn depth_map(&self) -> FloatMap {
        let data = self.depth.iter().zip(&self.valid).map(|(&d, &v)| if v { d as f32 } else { 0.0 }).collect();
        FloatMap::new(self.width, self.height, data).expect("map extents")
    }

    pub fn confidence_map(&self) -> FloatMap {
        let data = self.confidence.iter().zip(&self.valid).map(|(&c, &v)| if v { c as f32 } else { 0.0 }).collect();
        FloatMap::new(self.width, self.height, data).expect("map extents")
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

fn integral(width: usize, height: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let w1 = width + 1;
    let mut t = vec![0.0; w1 * (height + 1)];
    for y in 0..height {
        let mut row = 0.0;
        for x in 0..width {
            row += f(y * width + x);
            t[(y + 1) * w1 + x + 1] = t[y * w1 + x + 1] + row;
        }
    }
    t
}

/// Validity-aware spatial box average of every slice. Windows are clipped at
/// the image border and only valid cells contribute; invalid cells are left
/// untouched.
pub fn box_filter_volume(vol: &CostVolume, radius: usize) -> CostVolume {
    if radius == 0 {
        return vol.clone();
    }
    let (w, h) = (vol.width, vol.height);
    let n = w * h;
    let w1 = w + 1;
    let mut scores = vol.scores.clone();
    scores.par_chunks_mut(n).enumerate().for_each(|(k, out)| {
        let (s, v) = vol.slice(k);
        let sum = integral(w, h, |i| if v[i] { s[i] as f64 } else { 0.0 });
        let cnt = integral(w, h, |i| v[i] as u8 as f64);
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(h));
            for x in 0..w {
                if !v[y * w + x] {
                    continue;
                }
                let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(w));
                let rect = |t: &[f64]| t[y1 * w1 + x1] - t[y0 * w1 + x1] - t[y1 * w1 + x0] + t[y0 * w1 + x0];
                out[y * w + x] = (rect(&sum) / rect(&cnt)) as f32;
            }
        }
    });
    CostVolume {
        scores,
        ..vol.clone()
    }
}

/// Vertex offset of the parabola through `(-1, sm)`, `(0, s0)`, `(1, sp)`,
/// clamped to half a plane. Zero when the three points are not a strict maximum.
pub fn parabola_offset(sm: f64, s0: f64, sp: f64) -> f64 {
    let denom = sm - 2.0 * s0 + sp;
    if !(denom < 0.0) {
        return 0.0;
    }
    ((sm - sp) / (2.0 * denom)).clamp(-0.5, 0.5)
}

/// Winner-take-all depth with optional sub-plane refinement in inverse depth.
/// Ties go to the smaller plane index.
pub fn extract_depth(vol: &CostVolume, subpixel: bool) -> DepthMap {
    let (w, h, d) = (vol.width, vol.height, vol.plane_count());
    let n = w * h;
    let inv: Vec<f64> = vol.depths.iter().map(|z| 1.0 / z).collect();
    let (lo, hi) = vol
        .depths
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    let mut out = DepthMap::invalid(w, h);
    let results: Vec<Option<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(usize, f32)> = None;
            for k in 0..d {
                let c = k * n + i;
                if vol.valid[c] && best.is_none_or(|(_, s)| vol.scores[c] > s) {
                    best = Some((k, vol.scores[c]));
                }
            }
            let (k, s) = best?;
            let mut depth = vol.depths[k];
            if subpixel && k > 0 && k + 1 < d && vol.valid[(k - 1) * n + i] && vol.valid[(k + 1) * n + i] {
                let delta = parabola_offset(
                    vol.scores[(k - 1) * n + i] as f64,
                    s as f64,
                    vol.scores[(k + 1) * n + i] as f64,
                );
                if delta != 0.0 {
                    let step = if delta > 0.0 { inv[k + 1] - inv[k] } else { inv[k] - inv[k - 1] };
                    depth = (1.0 / (inv[k] + delta * step)).clamp(lo, hi);
                }
            }
            Some((depth, s as f64))
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        if let Some((z, c)) = r {
            out.depth[i] = z;
            out.confidence[i] = c;
            out.valid[i] = true;
        }
    }
    out
}

/// Plane index chosen per pixel (no refinement), `None` where invalid.
pub fn argmax_planes(vol: &CostVolume) -> Vec<Option<usize>> {
    let n = vol.width * vol.height;
    (0..n)
        .map(|i| {
            let mut best: Option<(usize, f32)> = None;
            for k in 0..vol.plane_count() {
                let c = k * n + i;
                if vol.valid[c] && best.is_none_or(|(_, s)| vol.scores[c] > s) {
                    best = Some((k, vol.scores[c]));
                }
            }
            best.map(|b| b.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(seed: u64, w: usize, h: usize, d: usize, p_invalid: f64) -> CostVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = w * h * d;
        let valid: Vec<bool> = (0..n).map(|_| !rng.random_bool(p_invalid)).collect();
        let scores = (0..n).map(|i| if valid[i] { rng.random::<f32>() } else { -1.0 }).collect();
        let depths = (0..d).map(|k| 0.5 + 0.1 * k as f64).collect();
        CostVolume::new(w, h, depths, scores, valid).unwrap()
    }

    fn brute_box(vol: &CostVolume, r: usize) -> Vec<f32> {
        let (w, h) = (vol.width(), vol.height());
        let mut out = vol.scores().to_vec();
        for k in 0..vol.plane_count() {
            for y in 0..h {
                for x in 0..w {
                    if !vol.valid()[vol.index(k, x, y)] {
                        continue;
                    }
                    let (mut s, mut c) = (0.0f64, 0usize);
                    for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                        for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                            let j = vol.index(k, xx, yy);
                            if vol.valid()[j] {
                                s += vol.scores()[j] as f64;
                                c += 1;
                            }
                        }
                    }
                    out[vol.index(k, x, y)] = (s / c as f64) as f32;
                }
            }
        }
        out
    }

    #[test]
    fn box_filter_matches_brute_force() {
        for seed in 0..20 {
            let vol = random_volume(seed, 7, 7, 2, 0.2);
            let fast = box_filter_volume(&vol, 1);
            let slow = brute_box(&vol, 1);
            for (a, b) in fast.scores().iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn box_filter_identity_and_constant() {
        let vol = random_volume(1, 5, 4, 3, 0.3);
        assert_eq!(box_filter_volume(&vol, 0), vol);
        let c = CostVolume::new(4, 3, vec![1.0], vec![0.25; 12], vec![true; 12]).unwrap();
        assert_eq!(box_filter_volume(&c, 2), c);
    }

    #[test]
    fn parabola_examples() {
        assert_eq!(parabola_offset(0.4, 0.9, 0.4), 0.0);
        let d = parabola_offset(0.2, 0.9, 0.4);
        assert!((d - (0.2 - 0.4) / (2.0 * (0.2 - 1.8 + 0.4))).abs() < 1e-15);
        // Dense numeric maximization of the interpolating quadratic.
        let q = |t: f64| 0.9 + 0.5 * (0.4 - 0.2) * t + 0.5 * (0.2 - 1.8 + 0.4) * t * t;
        let best = (-5000..=5000)
            .map(|i| i as f64 * 1e-4)
            .max_by(|a, b| q(*a).total_cmp(&q(*b)))
            .unwrap();
        assert!((best - d).abs() <= 1e-4);
        assert!(d > 0.0);
    }

    #[test]
    fn boundary_winner_is_not_refined() {
        let depths = vec![0.45, 0.6, 1.0];
        let vol = CostVolume::new(1, 1, depths, vec![0.9, 0.5, 0.1], vec![true; 3]).unwrap();
        let dm = extract_depth(&vol, true);
        assert_eq!(dm.depth[0], 0.45);
        assert_eq!(dm.confidence[0], 0.9f32 as f64);
    }

    #[test]
    fn ties_go_to_smaller_index_and_invalid_pixels() {
        let vol = CostVolume::new(2, 1, vec![1.0, 2.0], vec![0.5, 0.0, 0.5, 0.0], vec![true, false, true, false]).unwrap();
        let dm = extract_depth(&vol, false);
        assert_eq!(dm.depth[0], 1.0);
        assert!(!dm.valid[1]);
    }

    #[test]
    fn single_plane_volume() {
        let vol = CostVolume::new(2, 2, vec![0.7], vec![0.1, 0.2, 0.3, 0.4], vec![true; 4]).unwrap();
        let dm = extract_depth(&vol, true);
        assert!(dm.depth.iter().all(|&z| z == 0.7));
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_affine(seed in any::<u64>(), a in 0.1f32..4.0, b in -2.0f32..2.0) {
            let vol = random_volume(seed, 4, 3, 6, 0.1);
            prop_assert_eq!(argmax_planes(&vol), argmax_planes(&vol.affine(a, b)));
        }

        #[test]
        fn refinement_stays_within_half_plane(seed in any::<u64>()) {
            let depths: Vec<f64> = (0..8).map(|k| 1.0 / (2.0 - k as f64 * 0.1)).collect();
            let mut vol = random_volume(seed, 3, 3, 8, 0.0);
            vol = CostVolume::new(3, 3, depths.clone(), vol.scores().to_vec(), vol.valid().to_vec()).unwrap();
            let planes = argmax_planes(&vol);
            let dm = extract_depth(&vol, true);
            for (i, k) in planes.iter().enumerate() {
                let k = k.unwrap();
                let idx = (2.0 - 1.0 / dm.depth[i]) / 0.1;
                prop_assert!((idx - k as f64).abs() <= 0.5 + 1e-9);
            }
        }

        #[test]
        fn zero_radius_filter_then_extract_is_bit_exact(seed in any::<u64>()) {
            let vol = random_volume(seed, 5, 5, 4, 0.2);
            prop_assert_eq!(extract_depth(&box_filter_volume(&vol, 0), true), extract_depth(&vol, true));
        }
    }
}
