use nalgebra::{Matrix3, Vector2, Vector3};

use super::{CameraView, GeomError, GEOM_EPS};
use crate::scalar::Real;

/// Rotations and shared intrinsics that bring two views into a common
/// rectified frame whose x-axis runs along the baseline.
///
/// The rectified frame has its origin at the left camera center; the right
/// camera sits at `(baseline, 0, 0)`. Both rectified images share focal length,
/// principal point and dimensions, so disparity `d = x_left - x_right` maps to
/// depth `f * B / d`.
#[derive(Clone, Debug, PartialEq)]
pub struct RectifiedPair<T: Real> {
    pub left_id: u32,
    pub right_id: u32,
    /// Left camera frame to rectified frame.
    pub left_rectify_rot: Matrix3<T>,
    /// Right camera frame to rectified frame.
    pub right_rectify_rot: Matrix3<T>,
    pub rectified_focal: T,
    pub baseline: T,
    pub width: u32,
    pub height: u32,
    pub principal_x: T,
    pub principal_y: T,
    /// Inclusive integer disparity search range.
    pub disparity_range: [i32; 2],
}

/// Upper bound on rectified raster area relative to the two source images.
const MAX_AREA_RATIO: f64 = 4.0;

impl<T: Real> RectifiedPair<T> {
    fn to_rect(
        &self,
        rot: &Matrix3<T>,
        view: &CameraView<T>,
        pixel: &Vector2<T>,
    ) -> Option<Vector2<T>> {
        let cam = Vector3::new(
            (pixel.x - view.principal_x) / view.focal_x,
            (pixel.y - view.principal_y) / view.focal_y,
            T::one(),
        );
        let r = rot * cam;
        (r.z > T::lit(GEOM_EPS)).then(|| {
            Vector2::new(
                self.rectified_focal * r.x / r.z + self.principal_x,
                self.rectified_focal * r.y / r.z + self.principal_y,
            )
        })
    }

    fn from_rect(
        &self,
        rot: &Matrix3<T>,
        view: &CameraView<T>,
        rect: &Vector2<T>,
    ) -> Option<Vector2<T>> {
        let ray = Vector3::new(
            (rect.x - self.principal_x) / self.rectified_focal,
            (rect.y - self.principal_y) / self.rectified_focal,
            T::one(),
        );
        view.project_camera(&(rot.transpose() * ray)).ok()
    }

    /// Original left-image pixel to rectified pixel.
    pub fn left_to_rect(&self, left: &CameraView<T>, pixel: &Vector2<T>) -> Option<Vector2<T>> {
        self.to_rect(&self.left_rectify_rot, left, pixel)
    }

    pub fn right_to_rect(&self, right: &CameraView<T>, pixel: &Vector2<T>) -> Option<Vector2<T>> {
        self.to_rect(&self.right_rectify_rot, right, pixel)
    }

    /// Rectified pixel back to the original left image.
    pub fn rect_to_left(&self, left: &CameraView<T>, rect: &Vector2<T>) -> Option<Vector2<T>> {
        self.from_rect(&self.left_rectify_rot, left, rect)
    }

    pub fn rect_to_right(&self, right: &CameraView<T>, rect: &Vector2<T>) -> Option<Vector2<T>> {
        self.from_rect(&self.right_rectify_rot, right, rect)
    }

    /// World-to-rectified rotation (shared by both cameras).
    pub fn world_to_rect(&self, left: &CameraView<T>) -> Matrix3<T> {
        self.left_rectify_rot * left.rotation
    }

    pub fn disparity_count(&self) -> usize {
        (self.disparity_range[1] - self.disparity_range[0] + 1) as usize
    }
}

/// Rectifies a pair by rotating both cameras: the new x-axis follows the
/// baseline from `view_a` to `view_b`, the new z-axis is the mean optical axis
/// made orthogonal to it. The disparity range comes from `view_a`'s depth
/// prior widened by `d_range_margin` pixels.
pub fn rectify_pair<T: Real>(
    view_a: &CameraView<T>,
    view_b: &CameraView<T>,
    d_range_margin: i32,
) -> Result<RectifiedPair<T>, GeomError> {
    let base_vec = view_b.center - view_a.center;
    let baseline = base_vec.norm();
    if baseline < T::lit(1e-6) {
        return Err(GeomError::CoincidentCenters);
    }
    let za = view_a.optical_axis();
    let zb = view_b.optical_axis();
    if za.dot(&zb) < T::zero() {
        return Err(GeomError::ExcessiveConvergence(
            "optical axes diverge by more than 90 degrees".into(),
        ));
    }
    let e1 = base_vec / baseline;
    let mean_axis = za + zb;
    let e3_raw = mean_axis - e1 * mean_axis.dot(&e1);
    if e3_raw.norm() < T::lit(1e-9) {
        return Err(GeomError::ExcessiveConvergence(
            "optical axes parallel to the baseline".into(),
        ));
    }
    let e3 = e3_raw.normalize();
    let e2 = e3.cross(&e1);
    let world_to_rect = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);

    let mut pair = RectifiedPair {
        left_id: view_a.image_id,
        right_id: view_b.image_id,
        left_rectify_rot: world_to_rect * view_a.rotation.transpose(),
        right_rectify_rot: world_to_rect * view_b.rotation.transpose(),
        rectified_focal: (view_a.focal_x + view_a.focal_y) * T::lit(0.5),
        baseline,
        width: 0,
        height: 0,
        principal_x: T::zero(),
        principal_y: T::zero(),
        disparity_range: [0, 0],
    };

    // Bounding box of both image outlines in the rectified plane. The mapping is
    // a homography, so the four corners bound each image.
    let (mut min_x, mut min_y) = (T::max_value().unwrap(), T::max_value().unwrap());
    let (mut max_x, mut max_y) = (T::min_value().unwrap(), T::min_value().unwrap());
    for (view, rot) in [
        (view_a, pair.left_rectify_rot),
        (view_b, pair.right_rectify_rot),
    ] {
        let (w, h) = (
            T::lit(view.width as f64 - 0.5),
            T::lit(view.height as f64 - 0.5),
        );
        let half = T::lit(-0.5);
        for corner in [
            Vector2::new(half, half),
            Vector2::new(w, half),
            Vector2::new(half, h),
            Vector2::new(w, h),
        ] {
            let p = pair.to_rect(&rot, view, &corner).ok_or_else(|| {
                GeomError::ExcessiveConvergence("image corner behind the rectified plane".into())
            })?;
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
    }
    let width = (max_x - min_x).ceil().as_f64() as u64 + 1;
    let height = (max_y - min_y).ceil().as_f64() as u64 + 1;
    let source_area =
        (view_a.width as u64 * view_a.height as u64) + (view_b.width as u64 * view_b.height as u64);
    if (width * height) as f64 > MAX_AREA_RATIO * source_area as f64 {
        return Err(GeomError::ExcessiveConvergence(format!(
            "rectified raster {width}x{height} too large"
        )));
    }
    pair.width = width as u32;
    pair.height = height as u32;
    pair.principal_x = (-min_x + T::lit(0.5)).floor();
    pair.principal_y = (-min_y + T::lit(0.5)).floor();

    pair.disparity_range = disparity_range_from_prior(view_a, &pair, d_range_margin)?;
    Ok(pair)
}

fn disparity_range_from_prior<T: Real>(
    view: &CameraView<T>,
    pair: &RectifiedPair<T>,
    margin: i32,
) -> Result<[i32; 2], GeomError> {
    let [near, far] = view.depth_prior.ok_or_else(|| {
        GeomError::InvalidCamera(format!("view {} has no depth prior", view.image_id))
    })?;
    let fb = pair.rectified_focal * pair.baseline;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    const GRID: usize = 5;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let px = Vector2::new(
                T::lit((view.width - 1) as f64 * gx as f64 / (GRID - 1) as f64),
                T::lit((view.height - 1) as f64 * gy as f64 / (GRID - 1) as f64),
            );
            let ray = Vector3::new(
                (px.x - view.principal_x) / view.focal_x,
                (px.y - view.principal_y) / view.focal_y,
                T::one(),
            );
            for z in [near, far] {
                let r = pair.left_rectify_rot * (ray * z);
                if r.z > T::lit(GEOM_EPS) {
                    let d = (fb / r.z).as_f64();
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
        }
    }
    if !lo.is_finite() {
        return Err(GeomError::ExcessiveConvergence(
            "depth prior lies behind the rectified plane".into(),
        ));
    }
    let d_min = (lo.floor() as i32 - margin).max(1);
    let d_max = (hi.ceil() as i32 + margin).max(d_min);
    Ok([d_min, d_max])
}

/// Rectified-frame depth `f * B / d`.
pub fn disparity_to_depth<T: Real>(d: T, pair: &RectifiedPair<T>) -> Result<T, GeomError> {
    if d <= T::zero() {
        return Err(GeomError::NonPositiveDisparity);
    }
    Ok(pair.rectified_focal * pair.baseline / d)
}

pub fn depth_to_disparity<T: Real>(z: T, pair: &RectifiedPair<T>) -> Result<T, GeomError> {
    if z <= T::zero() {
        return Err(GeomError::NonPositiveDepth);
    }
    Ok(pair.rectified_focal * pair.baseline / z)
}
