use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Depth interval swept by fronto-parallel planes of the reference view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub z_min: f64,
    pub z_max: f64,
    pub plane_count: usize,
}

impl DepthRange {
    pub fn new(z_min: f64, z_max: f64, plane_count: usize) -> Result<Self> {
        let r = DepthRange { z_min, z_max, plane_count };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.z_min > 0.0 && self.z_min < self.z_max && self.z_max.is_finite(),
            InvalidArgument,
            "need 0 < z_min < z_max, got [{}, {}]",
            self.z_min,
            self.z_max
        );
        ensure!(self.plane_count >= 2, InvalidArgument, "need at least 2 planes, got {}", self.plane_count);
        Ok(())
    }

    /// Inverse-depth step between consecutive planes (negative: depth grows with the index).
    pub fn inverse_step(&self) -> f64 {
        (1.0 / self.z_max - 1.0 / self.z_min) / (self.plane_count - 1) as f64
    }

    pub fn inverse_depth(&self, index: f64) -> f64 {
        1.0 / self.z_min + index * self.inverse_step()
    }

    /// Continuous plane index of a depth, in inverse-depth units.
    pub fn plane_index(&self, depth: f64) -> f64 {
        (1.0 / depth - 1.0 / self.z_min) / self.inverse_step()
    }

    /// Nearest plane to `depth`, if it lies inside the range.
    pub fn nearest_plane(&self, depth: f64) -> Option<usize> {
        if !(depth >= self.z_min && depth <= self.z_max) {
            return None;
        }
        let k = self.plane_index(depth).round();
        Some((k.max(0.0) as usize).min(self.plane_count - 1))
    }
}

/// Depths equispaced in inverse depth from `z_min` (index 0) to `z_max`.
pub fn depth_planes(range: &DepthRange) -> Vec<f64> {
    let d = range.plane_count;
    (0..d)
        .map(|k| {
            if k == 0 {
                range.z_min
            } else if k == d - 1 {
                range.z_max
            } else {
                let t = k as f64 / (d - 1) as f64;
                1.0 / (1.0 / range.z_min + t * (1.0 / range.z_max - 1.0 / range.z_min))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_closed_form() {
        assert_eq!(depth_planes(&DepthRange::new(0.45, 1.0, 2).unwrap()), vec![0.45, 1.0]);
        let p = depth_planes(&DepthRange::new(0.5, 1.0, 3).unwrap());
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_depths_are_equispaced() {
        let r = DepthRange::new(0.45, 1.0, 256).unwrap();
        let p = depth_planes(&r);
        assert_eq!(p.len(), 256);
        assert_eq!((p[0], p[255]), (0.45, 1.0));
        let inv: Vec<f64> = p.iter().map(|d| 1.0 / d).collect();
        let step = inv[1] - inv[0];
        for w in inv.windows(2) {
            assert!(((w[1] - w[0]) - step).abs() < 1e-12);
            assert!(w[1] < w[0]);
        }
        for w in p.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn nearest_plane_snaps() {
        let r = DepthRange::new(0.5, 1.0, 3).unwrap();
        assert_eq!(r.nearest_plane(0.5), Some(0));
        assert_eq!(r.nearest_plane(0.68), Some(1));
        assert_eq!(r.nearest_plane(1.0), Some(2));
        assert_eq!(r.nearest_plane(1.2), None);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(DepthRange::new(0.0, 1.0, 4).is_err());
        assert!(DepthRange::new(1.0, 0.5, 4).is_err());
        assert!(DepthRange::new(0.5, 1.0, 1).is_err());
    }
}
