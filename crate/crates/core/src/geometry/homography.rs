use nalgebra::{Matrix3, Point2, Vector3};

use super::camera::Camera;
use crate::error::{ensure, Result};

/// Homography taking reference pixels to source pixels for the plane
/// `z = depth` of the reference camera frame.
///
/// With relative motion `x_src = R x_ref + t` and plane normal `n = (0,0,1)`,
/// every plane point satisfies `n.x / depth = 1`, so
/// `H = K_src (R + t n^T / depth) K_ref^-1`. The result is scaled so that
/// `H[2][2] = 1` whenever that entry is non-zero.
pub fn plane_homography(reference: &Camera, source: &Camera, depth: f64) -> Result<Matrix3<f64>> {
    ensure!(depth > 0.0 && depth.is_finite(), InvalidArgument, "plane depth must be positive, got {depth}");
    general_plane_homography(reference, source, &Vector3::z(), depth)
}

/// Homography for the plane `normal . x = offset` in the reference camera frame.
pub fn general_plane_homography(
    reference: &Camera,
    source: &Camera,
    normal: &Vector3<f64>,
    offset: f64,
) -> Result<Matrix3<f64>> {
    ensure!(
        offset.abs() > 0.0 && offset.is_finite(),
        InvalidArgument,
        "plane must not pass through the reference centre"
    );
    let r_ref = reference.pose.rotation();
    let r_src = source.pose.rotation();
    let r_rel = r_src * r_ref.transpose();
    let t_rel = source.pose.translation() - r_rel * reference.pose.translation();

    // The source centre expressed in the reference frame; if it lies on the
    // plane, the plane projects to a line and H is singular.
    let center_in_ref = -(r_rel.transpose() * t_rel);
    let scale = offset.abs().max(t_rel.norm());
    ensure!(
        (normal.dot(&center_in_ref) - offset).abs() > 1e-12 * scale,
        Degenerate,
        "plane passes through the source camera centre"
    );

    let h = source.intrinsics.matrix()
        * (r_rel + t_rel * normal.transpose() / offset)
        * reference.intrinsics.inverse_matrix();
    let h22 = h[(2, 2)];
    Ok(if h22.abs() > f64::EPSILON { h / h22 } else { h })
}

pub fn apply_homography(h: &Matrix3<f64>, p: &Point2<f64>) -> Option<Point2<f64>> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    (q.z.abs() > f64::EPSILON).then(|| Point2::new(q.x / q.z, q.y / q.z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::camera::{Intrinsics, Pose};
    use nalgebra::Point3;

    fn k() -> Intrinsics {
        Intrinsics::new(140.0, 142.0, 63.5, 62.0).unwrap()
    }

    fn cam_at(center: Vector3<f64>) -> Camera {
        Camera::new(k(), Pose::look_at(center, Vector3::new(0.05, -0.02, 0.7)).unwrap())
    }

    #[test]
    fn same_camera_is_identity() {
        let c = cam_at(Vector3::new(0.1, 0.0, 0.0));
        for d in [0.45, 0.7, 1.0] {
            let h = plane_homography(&c, &c, d).unwrap();
            assert!((h - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn pure_translation_is_horizontal_shift() {
        let tx = 0.15;
        let reference = Camera::new(k(), Pose::identity());
        let source = Camera::new(k(), Pose::new(Matrix3::identity(), Vector3::new(tx, 0.0, 0.0)).unwrap());
        let depth = 0.6;
        let h = plane_homography(&reference, &source, depth).unwrap();
        let shift = k().fx * tx / depth;
        let mut expect = Matrix3::identity();
        expect[(0, 2)] = shift;
        assert!((h - expect).abs().max() < 1e-12);

        // Oracle: lift each pixel of a 5x5 grid onto the plane and project it.
        for v in 0..5 {
            for u in 0..5 {
                let p = Point2::new(20.0 * u as f64, 20.0 * v as f64);
                let world = reference.backproject(&p, depth).unwrap();
                let direct = source.project(&world).unwrap();
                let mapped = apply_homography(&h, &p).unwrap();
                assert!((direct - mapped).norm() < 1e-9);
                assert!((mapped.x - p.x - shift).abs() < 1e-9 && (mapped.y - p.y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn consistent_with_point_transfer_for_general_poses() {
        let reference = cam_at(Vector3::new(0.02, 0.01, 0.0));
        let source = cam_at(Vector3::new(-0.2, 0.12, 0.03));
        for &depth in &[0.45, 0.61, 0.93] {
            let h = plane_homography(&reference, &source, depth).unwrap();
            for v in 0..6 {
                for u in 0..6 {
                    let p = Point2::new(3.0 + 24.0 * u as f64, 5.0 + 23.0 * v as f64);
                    let world = reference.backproject(&p, depth).unwrap();
                    let direct = source.project(&world).unwrap();
                    let mapped = apply_homography(&h, &p).unwrap();
                    assert!((direct - mapped).norm() < 1e-9, "{direct} vs {mapped}");
                }
            }
        }
    }

    #[test]
    fn forward_and_back_compose_to_identity() {
        let a = cam_at(Vector3::new(0.0, 0.0, 0.0));
        let b = cam_at(Vector3::new(0.25, -0.1, 0.05));
        let depth = 0.75;
        let hab = plane_homography(&a, &b, depth).unwrap();
        // The same plane in b's frame: n_b = R n, offset_b = depth + n_b . t.
        let r_rel = b.pose.rotation() * a.pose.rotation().transpose();
        let t_rel = b.pose.translation() - r_rel * a.pose.translation();
        let n_b = r_rel * Vector3::z();
        let hba = general_plane_homography(&b, &a, &n_b, depth + n_b.dot(&t_rel)).unwrap();
        let prod = hba * hab;
        assert!((prod / prod[(2, 2)] - Matrix3::identity()).abs().max() < 1e-9);
        let p = Point2::new(40.0, 70.0);
        let world: Point3<f64> = a.backproject(&p, depth).unwrap();
        let q = apply_homography(&hab, &p).unwrap();
        assert!((b.project(&world).unwrap() - q).norm() < 1e-9);
        assert!((apply_homography(&hba, &q).unwrap() - p).norm() < 1e-9);
    }

    #[test]
    fn plane_through_source_center_is_degenerate() {
        let reference = Camera::new(k(), Pose::identity());
        let source = Camera::new(k(), Pose::new(Matrix3::identity(), Vector3::new(0.1, 0.0, -0.5)).unwrap());
        assert!(plane_homography(&reference, &source, 0.5).is_err());
        assert!(plane_homography(&reference, &source, 0.0).is_err());
    }
}
