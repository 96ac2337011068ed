use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Tolerance for the orthonormality of rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        ensure!(
            fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite(),
            InvalidArgument,
            "focal lengths must be positive, got fx={fx} fy={fy}"
        );
        ensure!(cx.is_finite() && cy.is_finite(), InvalidArgument, "principal point must be finite");
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// World-to-camera rigid transform: `x_cam = R * x_world + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        ensure!(
            ortho <= ROTATION_TOLERANCE,
            InvalidArgument,
            "rotation is not orthonormal (max |R^T R - I| = {ortho:e})"
        );
        let det = rotation.determinant();
        ensure!(
            (det - 1.0).abs() <= ROTATION_TOLERANCE,
            InvalidArgument,
            "rotation determinant is {det}, expected +1"
        );
        ensure!(translation.iter().all(|v| v.is_finite()), InvalidArgument, "translation must be finite");
        Ok(Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `center` looking at `target`, with image rows pointing
    /// roughly along world +y.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> Result<Self> {
        let z = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("camera center coincides with its target".into()))?;
        let x = Vector3::y()
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("viewing direction parallel to +y".into()))?;
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        // Re-orthonormalise to keep the invariant tight after the cross products.
        let svd = r.svd(true, true);
        let r = svd.u.unwrap() * svd.v_t.unwrap();
        Pose::new(r, -(r * center))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose) -> Self {
        Camera { intrinsics, pose }
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.pose.rotation * p.coords + self.pose.translation
    }

    /// Project a world point to pixel coordinates.
    pub fn project(&self, p: &Point3<f64>) -> Result<Point2<f64>> {
        let c = self.world_to_camera(p);
        ensure!(c.z > 0.0, Degenerate, "point lies behind the camera (z = {})", c.z);
        let k = &self.intrinsics;
        Ok(Point2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
    }

    /// The point in the camera frame at z-depth `depth` along the pixel ray.
    pub fn backproject_camera(&self, pixel: &Point2<f64>, depth: f64) -> Result<Vector3<f64>> {
        ensure!(depth > 0.0 && depth.is_finite(), Degenerate, "depth must be positive, got {depth}");
        let k = &self.intrinsics;
        Ok(Vector3::new(
            (pixel.x - k.cx) / k.fx * depth,
            (pixel.y - k.cy) / k.fy * depth,
            depth,
        ))
    }

    /// Lift a pixel at z-depth `depth` to a world point.
    pub fn backproject(&self, pixel: &Point2<f64>, depth: f64) -> Result<Point3<f64>> {
        let c = self.backproject_camera(pixel, depth)?;
        Ok(Point3::from(self.pose.rotation.transpose() * (c - self.pose.translation)))
    }

    /// World-space ray (origin, unit direction) through a pixel.
    pub fn ray(&self, pixel: &Point2<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let k = &self.intrinsics;
        let d_cam = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        (self.pose.center(), (self.pose.rotation.transpose() * d_cam).normalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> Camera {
        let pose = Pose::look_at(Vector3::new(0.2, -0.1, 0.05), Vector3::new(0.0, 0.0, 0.7)).unwrap();
        Camera::new(Intrinsics::new(140.0, 150.0, 63.5, 60.0).unwrap(), pose)
    }

    #[test]
    fn principal_point_lifts_to_optical_axis() {
        let c = Camera::new(Intrinsics::new(100.0, 100.0, 50.0, 40.0).unwrap(), Pose::identity());
        let p = c.backproject(&Point2::new(50.0, 40.0), 0.8).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 0.8));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(Pose::new(r, Vector3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity() * 1.001, Vector3::zeros()).is_err());
        let c = cam();
        assert!(c.backproject(&Point2::new(1.0, 1.0), 0.0).is_err());
        let behind = c.backproject(&Point2::new(10.0, 10.0), 0.5).unwrap();
        let mirrored = Point3::from(2.0 * c.pose.center() - behind.coords);
        assert!(c.project(&mirrored).is_err());
    }

    proptest! {
        #[test]
        fn project_inverts_backproject(u in 0.0..128.0f64, v in 0.0..128.0f64, d in 0.45..1.0f64) {
            let c = cam();
            let p = c.backproject(&Point2::new(u, v), d).unwrap();
            let q = c.project(&p).unwrap();
            prop_assert!((q.x - u).abs() < 1e-9 && (q.y - v).abs() < 1e-9);
            prop_assert!((c.world_to_camera(&p).z - d).abs() < 1e-12);
        }
    }
}
