use nalgebra::{Point2, Point3};
use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::geometry::Camera;
use crate::sweep::DepthMap;

/// 3D points in the world frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        ensure!(
            points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())),
            InvalidArgument,
            "point coordinates must be finite"
        );
        Ok(PointCloud { points })
    }

    /// Lift every pixel valid in `depth` (and in `mask`, if given) through `camera`.
    pub fn from_depth_map(depth: &DepthMap, camera: &Camera, mask: Option<&[bool]>) -> Result<Self> {
        let mut points = Vec::new();
        for y in 0..depth.height {
            for x in 0..depth.width {
                let i = y * depth.width + x;
                if depth.valid[i] && mask.is_none_or(|m| m[i]) {
                    points.push(camera.backproject(&Point2::new(x as f64, y as f64), depth.depth[i])?);
                }
            }
        }
        PointCloud::new(points)
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[inline]
fn dist(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    (a - b).norm()
}

/// Uniform grid over a point set for exact nearest-neighbour queries.
struct Grid<'a> {
    points: &'a [Point3<f64>],
    origin: Point3<f64>,
    cell: f64,
    dims: [i64; 3],
    /// Point indices bucketed by cell, with `starts[c]..starts[c + 1]` per cell.
    order: Vec<usize>,
    starts: Vec<usize>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Point3<f64>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = hi - lo;
        let cells_for = |cell: f64| -> f64 { (0..3).map(|a| (extent[a] / cell).floor() + 1.0).product() };
        // Smallest cell size giving at most about two cells per point.
        let budget = 2.0 * points.len() as f64;
        let (mut small, mut large) = (1e-12f64, extent.max().max(1e-12) * 2.0);
        for _ in 0..100 {
            let mid = (small * large).sqrt();
            if cells_for(mid) > budget {
                small = mid;
            } else {
                large = mid;
            }
        }
        let cell = large;
        let dims = [0, 1, 2].map(|a| (extent[a] / cell).floor() as i64 + 1);
        let mut grid = Grid {
            points,
            origin: lo,
            cell,
            dims,
            order: Vec::new(),
            starts: Vec::new(),
        };
        let ncells = (dims[0] * dims[1] * dims[2]) as usize;
        let cells: Vec<usize> = points.iter().map(|p| grid.flat(grid.coords(p)).unwrap()).collect();
        let mut counts = vec![0usize; ncells + 1];
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for c in 0..ncells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        grid.order = order;
        grid.starts = counts;
        grid
    }

    fn coords(&self, p: &Point3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn flat(&self, c: [i64; 3]) -> Option<usize> {
        if (0..3).all(|a| c[a] >= 0 && c[a] < self.dims[a]) {
            Some(((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize)
        } else {
            None
        }
    }

    fn nearest(&self, q: &Point3<f64>) -> f64 {
        let c = self.coords(q);
        // Rings below `first` miss the grid, rings beyond `last` cover nothing new.
        let first = (0..3).map(|a| (-c[a]).max(c[a] - (self.dims[a] - 1)).max(0)).max().unwrap();
        let last = (0..3).map(|a| c[a].abs().max((self.dims[a] - 1 - c[a]).abs())).max().unwrap();
        let range = |a: usize, k: i64| (c[a] - k).max(0)..=(c[a] + k).min(self.dims[a] - 1);
        let mut best = f64::INFINITY;
        for k in first..=last {
            for z in range(2, k) {
                for y in range(1, k) {
                    for x in range(0, k) {
                        if (x - c[0]).abs().max((y - c[1]).abs()).max((z - c[2]).abs()) != k {
                            continue;
                        }
                        let f = self.flat([x, y, z]).unwrap();
                        for &i in &self.order[self.starts[f]..self.starts[f + 1]] {
                            best = best.min(dist(q, &self.points[i]));
                        }
                    }
                }
            }
            // Every cell outside ring k is at least k cells away from the query.
            if best < k as f64 * self.cell * (1.0 - 1e-9) {
                break;
            }
        }
        best
    }
}

/// Distance from each point of `from` to its nearest neighbour in `to`.
pub fn nn_distance(from: &PointCloud, to: &PointCloud) -> Result<Vec<f64>> {
    ensure!(!from.is_empty() && !to.is_empty(), InvalidArgument, "nearest-neighbour distance needs non-empty clouds");
    let grid = Grid::new(to.points());
    Ok(from.points().par_iter().map(|q| grid.nearest(q)).collect())
}

/// O(N M) reference implementation.
pub fn nn_distance_brute(from: &PointCloud, to: &PointCloud) -> Result<Vec<f64>> {
    ensure!(!from.is_empty() && !to.is_empty(), InvalidArgument, "nearest-neighbour distance needs non-empty clouds");
    Ok(from
        .points()
        .iter()
        .map(|q| to.points().iter().map(|p| dist(q, p)).fold(f64::INFINITY, f64::min))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(v: &[(f64, f64, f64)]) -> PointCloud {
        PointCloud::new(v.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap()
    }

    #[test]
    fn trivial_cases() {
        let a = cloud(&[(0.0, 0.0, 0.0), (1.0, 2.0, 3.0)]);
        assert_eq!(nn_distance(&a, &a).unwrap(), vec![0.0, 0.0]);
        let b = cloud(&[(1.0, 0.0, 0.0)]);
        assert_eq!(nn_distance(&cloud(&[(0.0, 0.0, 0.0)]), &b).unwrap(), vec![1.0]);
        assert!(nn_distance(&a, &PointCloud::default()).is_err());
    }

    fn arb_cloud(max: usize) -> impl Strategy<Value = PointCloud> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -0.2f64..0.2), 1..max)
            .prop_map(|v| PointCloud::new(v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn grid_equals_brute_force(a in arb_cloud(60), b in arb_cloud(80), shift in -3.0f64..3.0) {
            let moved = PointCloud::new(a.points().iter().map(|p| p + nalgebra::Vector3::new(shift, 0.0, 0.0)).collect()).unwrap();
            prop_assert_eq!(nn_distance(&moved, &b).unwrap(), nn_distance_brute(&moved, &b).unwrap());
        }
    }

    #[test]
    fn degenerate_planar_and_duplicate_clouds() {
        let flat = cloud(&[(0.0, 0.0, 1.0), (0.5, 0.0, 1.0), (0.5, 0.5, 1.0), (0.5, 0.5, 1.0)]);
        let q = cloud(&[(0.2, 0.1, 1.3), (-4.0, 9.0, 1.0)]);
        assert_eq!(nn_distance(&q, &flat).unwrap(), nn_distance_brute(&q, &flat).unwrap());
    }
}
