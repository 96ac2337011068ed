use serde::{Deserialize, Serialize};

use super::{nn_distance, PointCloud};
use crate::error::{ensure, Result};
use crate::geometry::Camera;
use crate::sweep::DepthMap;

pub const DEFAULT_TRUNCATION_MM: f64 = 20.0;
/// Scene units are metres.
pub const METRES_TO_MM: f64 = 1000.0;

/// Mean and median of distances clipped at `trunc_mm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

fn summarize(mut d: Vec<f64>) -> Summary {
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    let median = if d.len() % 2 == 1 { d[m] } else { 0.5 * (d[m - 1] + d[m]) };
    Summary { mean, median }
}

/// Truncated distance from reconstructed points to the ground truth, in mm.
pub fn accuracy(recon: &PointCloud, gt: &PointCloud, trunc_mm: f64, unit_to_mm: f64) -> Result<Summary> {
    ensure!(trunc_mm > 0.0, InvalidArgument, "truncation must be positive");
    ensure!(unit_to_mm > 0.0, InvalidArgument, "unit scale must be positive");
    let d = nn_distance(recon, gt)?;
    Ok(summarize(d.into_iter().map(|v| (v * unit_to_mm).min(trunc_mm)).collect()))
}

/// Truncated distance from ground-truth points to the reconstruction, in mm.
/// Arguments are in the same order as [`accuracy`], so
/// `completeness(a, b) == accuracy(b, a)`.
pub fn completeness(recon: &PointCloud, gt: &PointCloud, trunc_mm: f64, unit_to_mm: f64) -> Result<Summary> {
    accuracy(gt, recon, trunc_mm, unit_to_mm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Free-form label such as the similarity measure.
    pub label: String,
    pub views: Option<usize>,
    pub accuracy_mean: f64,
    pub accuracy_median: f64,
    pub completeness_mean: f64,
    pub completeness_median: f64,
    pub truncation_mm: f64,
    pub recon_points: usize,
    pub gt_points: usize,
    /// Medians are taken over truncated distances.
    pub median_truncated: bool,
}

/// Lift both depth maps through `camera` and compare the clouds. Estimates
/// are only taken at pixels with ground truth.
pub fn evaluate_depth(
    estimate: &DepthMap,
    gt: &DepthMap,
    camera: &Camera,
    trunc_mm: f64,
    unit_to_mm: f64,
) -> Result<(Summary, Summary, usize, usize)> {
    ensure!(
        estimate.width == gt.width && estimate.height == gt.height,
        Shape,
        "estimate is {}x{}, ground truth is {}x{}",
        estimate.width,
        estimate.height,
        gt.width,
        gt.height
    );
    let recon = PointCloud::from_depth_map(estimate, camera, Some(&gt.valid))?;
    let truth = PointCloud::from_depth_map(gt, camera, None)?;
    ensure!(!recon.is_empty(), InvalidArgument, "the estimate has no valid pixel with ground truth");
    ensure!(!truth.is_empty(), InvalidArgument, "the ground truth has no valid pixel");
    let acc = accuracy(&recon, &truth, trunc_mm, unit_to_mm)?;
    let comp = completeness(&recon, &truth, trunc_mm, unit_to_mm)?;
    Ok((acc, comp, recon.len(), truth.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use proptest::prelude::*;

    fn cloud(v: Vec<(f64, f64, f64)>) -> PointCloud {
        PointCloud::new(v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect()).unwrap()
    }

    #[test]
    fn subsets_score_zero() {
        let gt = cloud(vec![(0.0, 0.0, 1.0), (0.1, 0.0, 1.0), (0.2, 0.0, 1.0)]);
        let sub = cloud(vec![(0.1, 0.0, 1.0)]);
        let a = accuracy(&sub, &gt, 20.0, METRES_TO_MM).unwrap();
        assert_eq!((a.mean, a.median), (0.0, 0.0));
        // The subset as ground truth is fully covered by the larger cloud.
        let c = completeness(&gt, &sub, 20.0, METRES_TO_MM).unwrap();
        assert_eq!((c.mean, c.median), (0.0, 0.0));
    }

    #[test]
    fn outlier_contributes_truncation() {
        let gt = cloud(vec![(0.0, 0.0, 1.0), (0.1, 0.0, 1.0), (0.2, 0.0, 1.0)]);
        let mut pts = gt.points().to_vec();
        pts.push(Point3::new(0.0, 0.0, 2.0));
        let recon = PointCloud::new(pts).unwrap();
        let a = accuracy(&recon, &gt, 20.0, METRES_TO_MM).unwrap();
        assert_eq!(a.mean, 20.0 / 4.0);
        assert_eq!(a.median, 0.0);
    }

    proptest! {
        #[test]
        fn truncation_bound_and_symmetry(
            a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.5f64..1.5), 1..40),
            b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.5f64..1.5), 1..40),
        ) {
            let (a, b) = (cloud(a), cloud(b));
            let acc = accuracy(&a, &b, 20.0, METRES_TO_MM).unwrap();
            prop_assert!(acc.mean <= 20.0 && acc.median <= 20.0);
            prop_assert_eq!(completeness(&b, &a, 20.0, METRES_TO_MM).unwrap(), acc);
        }
    }
}
