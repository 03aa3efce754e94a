//! Pinhole cameras (no distortion) with world-from-camera poses.
//!
//! Camera frame: x right, y down, z forward (optical axis). A world point
//! `X` maps to camera coordinates `Rᵀ (X − C)` where `R` is the
//! world-from-camera rotation and `C` the camera center.

use nalgebra::{Matrix3, Matrix3x4, Point2, Point3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CameraView<T: Real> {
    pub view_id: String,
    /// Image filename; its stem selects the matching mask.
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    /// World-from-camera rotation.
    pub rotation: Matrix3<T>,
    pub center: Point3<T>,
}

/// Unit direction from a camera center toward a face barycenter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewRay<T: Real> {
    pub view: usize,
    pub face: usize,
    pub direction: Vector3<T>,
}

impl<T: Real> CameraView<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        view_id: impl Into<String>,
        image: impl Into<String>,
        width: u32,
        height: u32,
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        rotation: Matrix3<T>,
        center: Point3<T>,
    ) -> Result<Self> {
        let cam = CameraView {
            view_id: view_id.into(),
            image: image.into(),
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            center,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidCamera {
            view: self.view_id.clone(),
            reason,
        };
        if self.width == 0 || self.height == 0 {
            return Err(fail("image size must be positive".into()));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(fail("focal lengths must be positive".into()));
        }
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        if !(self.cx >= T::zero() && self.cx <= w && self.cy >= T::zero() && self.cy <= h) {
            return Err(fail("principal point outside image".into()));
        }
        let ortho = self.rotation * self.rotation.transpose() - Matrix3::identity();
        let dev = to_f64(ortho.abs().max());
        if !(dev <= 1e-8) {
            return Err(fail(format!("rotation not orthonormal (deviation {dev:e})")));
        }
        if !(self.rotation.determinant() > T::zero()) {
            return Err(fail("rotation has negative determinant".into()));
        }
        if !self.center.coords.iter().all(|c| c.is_finite()) {
            return Err(fail("camera center not finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn to_camera(&self, p: &Point3<T>) -> Vector3<T> {
        self.rotation.tr_mul(&(p - self.center))
    }

    /// Pixel of a camera-frame point with positive depth, ignoring image bounds.
    #[inline]
    pub fn pixel_of_camera_point(&self, pc: &Vector3<T>) -> Point2<T> {
        Point2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        )
    }

    /// Perspective projection; `None` behind the camera or outside the image.
    pub fn project(&self, p: &Point3<T>) -> Option<Point2<T>> {
        let px = self.project_unbounded(p)?;
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        (px.x >= T::zero() && px.x < w && px.y >= T::zero() && px.y < h).then_some(px)
    }

    /// Perspective projection without the image-bounds check.
    pub fn project_unbounded(&self, p: &Point3<T>) -> Option<Point2<T>> {
        let pc = self.to_camera(p);
        (pc.z > T::zero()).then(|| self.pixel_of_camera_point(&pc))
    }

    /// World point at camera depth `depth` along the ray through `px`.
    pub fn unproject(&self, px: &Point2<T>, depth: T) -> Point3<T> {
        let pc = Vector3::new(
            (px.x - self.cx) / self.fx * depth,
            (px.y - self.cy) / self.fy * depth,
            depth,
        );
        self.center + self.rotation * pc
    }

    /// `K [Rᵀ | −Rᵀ C]`.
    pub fn projection_matrix(&self) -> Matrix3x4<T> {
        let k = Matrix3::new(
            self.fx,
            T::zero(),
            self.cx,
            T::zero(),
            self.fy,
            self.cy,
            T::zero(),
            T::zero(),
            T::one(),
        );
        let rt = self.rotation.transpose();
        let t = -(rt * self.center.coords);
        let mut ext = Matrix3x4::zeros();
        ext.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        ext.set_column(3, &t);
        k * ext
    }

    /// Optical axis (camera +z) in world coordinates.
    pub fn forward(&self) -> Vector3<T> {
        self.rotation.column(2).into_owned()
    }

    /// Applies a rigid transform `p -> r p + t` to the pose.
    pub fn transformed(&self, r: &Matrix3<T>, t: &Vector3<T>) -> Self {
        let mut out = self.clone();
        out.rotation = r * self.rotation;
        out.center = Point3::from(r * self.center.coords + t);
        out
    }

    /// Scales the camera center (similarity with the scene).
    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.center = self.center * s;
        out
    }
}

/// Normalized ray from the camera center to the face barycenter.
pub fn face_ray<T: Real>(
    view: &CameraView<T>,
    view_index: usize,
    mesh: &TriangleMesh<T>,
    face: usize,
) -> Result<ViewRay<T>> {
    let d = mesh.face_barycenter(face) - view.center;
    let n = d.norm();
    if !(n > T::zero()) {
        return Err(Error::DegenerateRay { face });
    }
    Ok(ViewRay {
        view: view_index,
        face,
        direction: d / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cam(center: Point3<f64>) -> CameraView<f64> {
        CameraView::new(
            "v",
            "v.png",
            640,
            480,
            500.0,
            520.0,
            320.0,
            240.0,
            Matrix3::identity(),
            center,
        )
        .unwrap()
    }

    #[test]
    fn axis_point_hits_principal_point() {
        let c = cam(Point3::origin());
        let px = c.project(&Point3::new(0.0, 0.0, 7.0)).unwrap();
        assert_relative_eq!(px, Point2::new(320.0, 240.0));
    }

    #[test]
    fn behind_camera_is_none() {
        let c = cam(Point3::origin());
        assert!(c.project(&Point3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn lateral_offset_follows_pinhole() {
        let c = cam(Point3::origin());
        let px = c.project(&Point3::new(0.3, 0.0, 2.0)).unwrap();
        assert_relative_eq!(px.x - 320.0, 500.0 * 0.3 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_matrix_agrees_with_project() {
        let r = nalgebra::Rotation3::from_euler_angles(0.1, -0.2, 0.3).into_inner();
        let c = CameraView::new("v", "v.png", 640, 480, 500.0, 500.0, 320.0, 240.0, r, Point3::new(0.5, -0.2, -4.0)).unwrap();
        let x = Point3::new(0.1, 0.2, 0.3);
        let h = c.projection_matrix() * x.to_homogeneous();
        let px = c.project_unbounded(&x).unwrap();
        assert_relative_eq!(h.x / h.z, px.x, epsilon = 1e-9);
        assert_relative_eq!(h.y / h.z, px.y, epsilon = 1e-9);
    }

    #[test]
    fn face_ray_directions() {
        let tri = |z: f64, x0: f64| {
            TriangleMesh::new(
                vec![
                    Point3::new(x0 - 1.0, -1.0, z),
                    Point3::new(x0 + 2.0, -1.0, z),
                    Point3::new(x0 - 1.0, 2.0, z),
                ],
                vec![[0, 1, 2]],
            )
            .unwrap()
        };
        let m = tri(2.0, 0.0);
        let r = face_ray(&cam(Point3::origin()), 0, &m, 0).unwrap();
        assert_relative_eq!(r.direction, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);

        let m = tri(-3.0, 1.0);
        let r = face_ray(&cam(Point3::new(1.0, 0.0, 0.0)), 0, &m, 0).unwrap();
        assert_relative_eq!(r.direction, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);

        let err = face_ray(&cam(Point3::new(1.0, 0.0, -3.0)), 0, &m, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateRay { face: 0 }));
    }

    #[test]
    fn rejects_bad_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 1)] = 0.01;
        assert!(CameraView::new("v", "v.png", 10, 10, 1.0, 1.0, 5.0, 5.0, r, Point3::origin()).is_err());
        assert!(CameraView::new("v", "v.png", 10, 10, -1.0, 1.0, 5.0, 5.0, Matrix3::identity(), Point3::origin()).is_err());
        assert!(CameraView::new("v", "v.png", 10, 10, 1.0, 1.0, 50.0, 5.0, Matrix3::identity(), Point3::origin()).is_err());
    }

    proptest! {
        #[test]
        fn unproject_then_project_round_trips(u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.1f64..100.0,
                                                ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0) {
            let r = nalgebra::Rotation3::from_euler_angles(ax, ay, az).into_inner();
            let c = CameraView::new("v", "v.png", 640, 480, 600.0, 610.0, 320.0, 240.0, r, Point3::new(1.0, 2.0, 3.0)).unwrap();
            let px = Point2::new(u, v);
            let back = c.project(&c.unproject(&px, d)).unwrap();
            prop_assert!((back - px).norm() < 1e-9);
        }
    }
}
