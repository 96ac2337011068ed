use crate::error::{ensure, Result};
use crate::io::RgbImage;
use crate::sweep::DepthMap;

/// Errors below this many millimetres map to the bottom of the scale.
const LOG_FLOOR_MM: f64 = 0.1;

const STOPS: [[f64; 3]; 6] = [
    [0.0, 0.0, 0.5],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.5, 0.0, 0.0],
];

pub const NO_GROUND_TRUTH: [u8; 3] = [0, 0, 0];
pub const NO_ESTIMATE: [u8; 3] = [128, 128, 128];

/// Dark blue at 0 through blue, cyan, yellow and red to dark red at 1.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [0, 1, 2].map(|c| ((a[c] + f * (b[c] - a[c])) * 255.0).round() as u8)
}

/// Position of an absolute error on the logarithmic scale; 1 at `trunc_mm` and beyond.
pub fn error_scale(err_mm: f64, trunc_mm: f64) -> f64 {
    ((1.0 + err_mm / LOG_FLOOR_MM).ln() / (1.0 + trunc_mm / LOG_FLOOR_MM).ln()).clamp(0.0, 1.0)
}

/// Per-pixel `|estimate - gt|` on a log scale. Black without ground truth,
/// grey where the estimate is missing.
pub fn error_heatmap(estimate: &DepthMap, gt: &DepthMap, trunc_mm: f64, unit_to_mm: f64) -> Result<RgbImage> {
    ensure!(
        estimate.width == gt.width && estimate.height == gt.height,
        Shape,
        "estimate and ground truth differ in size"
    );
    let pixels = (0..gt.depth.len())
        .map(|i| {
            if !gt.valid[i] {
                NO_GROUND_TRUTH
            } else if !estimate.valid[i] {
                NO_ESTIMATE
            } else {
                colormap(error_scale((estimate.depth[i] - gt.depth[i]).abs() * unit_to_mm, trunc_mm))
            }
        })
        .collect();
    Ok(RgbImage {
        width: gt.width,
        height: gt.height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hue(c: [u8; 3]) -> f64 {
        let [r, g, b] = c.map(|v| v as f64 / 255.0);
        let max = r.max(g).max(b);
        let d = max - r.min(g).min(b);
        if d == 0.0 {
            return 0.0;
        }
        let h = if max == r {
            ((g - b) / d).rem_euclid(6.0)
        } else if max == g {
            (b - r) / d + 2.0
        } else {
            (r - g) / d + 4.0
        };
        60.0 * h
    }

    #[test]
    fn endpoints() {
        assert_eq!(colormap(error_scale(0.0, 20.0)), [0, 0, 128]);
        assert_eq!(colormap(error_scale(20.0, 20.0)), [128, 0, 0]);
        assert_eq!(colormap(error_scale(500.0, 20.0)), [128, 0, 0]);
    }

    #[test]
    fn hue_never_turns_bluer() {
        let mut last = f64::INFINITY;
        for i in 0..=2000 {
            let h = hue(colormap(error_scale(i as f64 * 0.011, 20.0)));
            assert!(h <= last + 1e-9, "hue rose to {h} at step {i}");
            last = h;
        }
    }

    #[test]
    fn masks() {
        let mut gt = DepthMap::invalid(3, 1);
        gt.valid = vec![true, true, false];
        gt.depth = vec![0.5, 0.5, 0.0];
        let mut est = gt.clone();
        est.valid[1] = false;
        let img = error_heatmap(&est, &gt, 20.0, 1000.0).unwrap();
        assert_eq!(img.pixels, vec![[0, 0, 128], NO_ESTIMATE, NO_GROUND_TRUTH]);
    }
}
