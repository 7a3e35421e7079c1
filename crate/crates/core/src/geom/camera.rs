use std::sync::Arc;

use nalgebra::{Matrix3, Vector2, Vector3};

use super::{GeomError, GEOM_EPS};
use crate::raster::Raster;
use crate::scalar::Real;

/// An oriented pinhole camera together with its image.
///
/// `rotation` maps world coordinates into the camera frame (x right, y down,
/// z along the optical axis); `center` is the projection center in world
/// coordinates. Pixel centers sit at integer coordinates.
#[derive(Clone, Debug)]
pub struct CameraView<T: Real> {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub focal_x: T,
    pub focal_y: T,
    pub principal_x: T,
    pub principal_y: T,
    pub rotation: Matrix3<T>,
    pub center: Vector3<T>,
    /// Expected camera-frame depth range of the scene, `[near, far]`.
    pub depth_prior: Option<[T; 2]>,
    pub raster: Option<Arc<Raster>>,
}

impl<T: Real> CameraView<T> {
    pub fn new(
        image_id: u32,
        width: u32,
        height: u32,
        focal: [T; 2],
        principal: [T; 2],
        rotation: Matrix3<T>,
        center: Vector3<T>,
    ) -> Result<Self, GeomError> {
        let view = Self {
            image_id,
            width,
            height,
            focal_x: focal[0],
            focal_y: focal[1],
            principal_x: principal[0],
            principal_y: principal[1],
            rotation,
            center,
            depth_prior: None,
            raster: None,
        };
        view.validate()?;
        Ok(view)
    }

    pub fn with_depth_prior(mut self, near: T, far: T) -> Self {
        self.depth_prior = Some([near, far]);
        self
    }

    pub fn with_raster(mut self, raster: Arc<Raster>) -> Self {
        self.raster = Some(raster);
        self
    }

    /// Checks the orthonormality, focal and principal point invariants.
    pub fn validate(&self) -> Result<(), GeomError> {
        let tol = T::lit(1e-9).max(T::default_epsilon() * T::lit(100.0));
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        if gram.amax() >= tol {
            return Err(GeomError::InvalidCamera(
                "rotation is not orthonormal".into(),
            ));
        }
        if self.rotation.determinant() <= T::zero() {
            return Err(GeomError::InvalidCamera(
                "rotation determinant is not +1".into(),
            ));
        }
        if !(self.focal_x > T::zero() && self.focal_y > T::zero()) {
            return Err(GeomError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        let inside = |p: T, dim: u32| p >= T::zero() && p < T::lit(dim as f64);
        if !inside(self.principal_x, self.width) || !inside(self.principal_y, self.height) {
            return Err(GeomError::InvalidCamera(
                "principal point outside image".into(),
            ));
        }
        if let Some([near, far]) = self.depth_prior {
            if !(near > T::zero() && far > near) {
                return Err(GeomError::InvalidCamera(
                    "depth prior must satisfy 0 < near < far".into(),
                ));
            }
        }
        Ok(())
    }

    /// World point expressed in the camera frame.
    #[inline]
    pub fn to_camera(&self, point: &Vector3<T>) -> Vector3<T> {
        self.rotation * (point - self.center)
    }

    /// Optical axis (camera +z) in world coordinates.
    pub fn optical_axis(&self) -> Vector3<T> {
        self.rotation.row(2).transpose()
    }

    /// World-frame direction of the ray through `pixel`, scaled so that its
    /// camera-frame z component is 1.
    pub fn pixel_ray(&self, pixel: &Vector2<T>) -> Vector3<T> {
        let cam = Vector3::new(
            (pixel.x - self.principal_x) / self.focal_x,
            (pixel.y - self.principal_y) / self.focal_y,
            T::one(),
        );
        self.rotation.transpose() * cam
    }

    /// World point at camera-frame depth `depth` along the ray through `pixel`.
    pub fn backproject(&self, pixel: &Vector2<T>, depth: T) -> Vector3<T> {
        self.center + self.pixel_ray(pixel) * depth
    }

    /// Projects a camera-frame point with the intrinsics.
    #[inline]
    pub fn project_camera(&self, cam: &Vector3<T>) -> Result<Vector2<T>, GeomError> {
        if cam.z <= T::lit(GEOM_EPS) {
            return Err(GeomError::NonPositiveDepth);
        }
        Ok(Vector2::new(
            self.focal_x * cam.x / cam.z + self.principal_x,
            self.focal_y * cam.y / cam.z + self.principal_y,
        ))
    }

    pub fn project(&self, point: &Vector3<T>) -> Result<Vector2<T>, GeomError> {
        self.project_camera(&self.to_camera(point))
    }

    /// True when the pixel lies within the span of pixel centers.
    pub fn in_bounds(&self, pixel: &Vector2<T>) -> bool {
        pixel.x >= T::zero()
            && pixel.y >= T::zero()
            && pixel.x <= T::lit((self.width - 1) as f64)
            && pixel.y <= T::lit((self.height - 1) as f64)
    }

    /// Converts the scalar type, dropping nothing.
    pub fn cast<U: Real>(&self) -> CameraView<U> {
        let c = |v: T| U::lit(v.as_f64());
        CameraView {
            image_id: self.image_id,
            width: self.width,
            height: self.height,
            focal_x: c(self.focal_x),
            focal_y: c(self.focal_y),
            principal_x: c(self.principal_x),
            principal_y: c(self.principal_y),
            rotation: self.rotation.map(c),
            center: self.center.map(c),
            depth_prior: self.depth_prior.map(|[a, b]| [c(a), c(b)]),
            raster: self.raster.clone(),
        }
    }
}

/// Pinhole projection of a world point into `view`.
pub fn project<T: Real>(point: &Vector3<T>, view: &CameraView<T>) -> Result<Vector2<T>, GeomError> {
    view.project(point)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    pub(crate) fn simple_view(
        f: f64,
        c: f64,
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
    ) -> CameraView<f64> {
        CameraView::new(
            0,
            (2.0 * c) as u32,
            (2.0 * c) as u32,
            [f, f],
            [c, c],
            rotation,
            center,
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let r = *Rotation3::from_euler_angles(0.3, -0.2, 1.1).matrix();
        let view = simple_view(800.0, 400.0, r, Vector3::new(1.0, 2.0, 3.0));
        for depth in [0.5, 10.0, 1e4] {
            let p = view.center + view.optical_axis() * depth;
            let px = project(&p, &view).unwrap();
            assert_abs_diff_eq!(px.x, 400.0, epsilon = 1e-9);
            assert_abs_diff_eq!(px.y, 400.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn hand_evaluated_projection() {
        let view = simple_view(1000.0, 500.0, Matrix3::identity(), Vector3::zeros());
        let px = project(&Vector3::new(1.0, 2.0, 10.0), &view).unwrap();
        assert_eq!(px, Vector2::new(600.0, 700.0));
    }

    #[test]
    fn projecting_the_center_fails() {
        let view = simple_view(
            1000.0,
            500.0,
            Matrix3::identity(),
            Vector3::new(4.0, 5.0, 6.0),
        );
        assert_eq!(
            project(&view.center, &view),
            Err(GeomError::NonPositiveDepth)
        );
        assert_eq!(
            project(&Vector3::new(0.0, 0.0, -3.0), &view),
            Err(GeomError::NonPositiveDepth)
        );
    }

    #[test]
    fn generic_over_f32() {
        let view: CameraView<f32> = CameraView::new(
            1,
            1000,
            1000,
            [1000.0, 1000.0],
            [500.0, 500.0],
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap();
        let px = view.project(&Vector3::new(1.0f32, 2.0, 10.0)).unwrap();
        assert!((px.x - 600.0).abs() < 1e-3 && (px.y - 700.0).abs() < 1e-3);
    }

    #[test]
    fn validation_rejects_bad_cameras() {
        let mut bad = Matrix3::identity();
        bad[(0, 0)] = -1.0;
        assert!(CameraView::new(0, 10, 10, [1.0, 1.0], [5.0, 5.0], bad, Vector3::zeros()).is_err());
        let skew = Matrix3::new(1.0, 0.01, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(
            CameraView::new(0, 10, 10, [1.0, 1.0], [5.0, 5.0], skew, Vector3::zeros()).is_err()
        );
        let id = Matrix3::identity();
        assert!(CameraView::new(0, 10, 10, [0.0, 1.0], [5.0, 5.0], id, Vector3::zeros()).is_err());
        assert!(CameraView::new(0, 10, 10, [1.0, 1.0], [10.0, 5.0], id, Vector3::zeros()).is_err());
    }

    proptest! {
        #[test]
        fn backprojection_round_trips(
            angles in prop::array::uniform3(-3.0f64..3.0),
            u in 0.0f64..640.0, v in 0.0f64..480.0, z in 0.01f64..1e4,
        ) {
            let r = *Rotation3::from_euler_angles(angles[0], angles[1], angles[2]).matrix();
            let view = CameraView::new(3, 640, 480, [700.0, 710.0], [320.0, 240.0], r, Vector3::new(5.0, -2.0, 30.0)).unwrap();
            let px = Vector2::new(u, v);
            let back = project(&view.backproject(&px, z), &view).unwrap();
            prop_assert!((back - px).amax() < 1e-6);
        }
    }
}
