use nalgebra::{Vector2, Vector3};

use super::{CameraView, GeomError, GEOM_EPS};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangulation<T: Real> {
    pub point: Vector3<T>,
    /// Length of the common perpendicular between the two rays.
    pub ray_gap: T,
}

/// Midpoint triangulation: the point halfway along the common perpendicular of
/// the two back-projected rays.
pub fn triangulate<T: Real>(
    px_a: &Vector2<T>,
    view_a: &CameraView<T>,
    px_b: &Vector2<T>,
    view_b: &CameraView<T>,
) -> Result<Triangulation<T>, GeomError> {
    let eps = T::lit(GEOM_EPS);
    if (view_a.center - view_b.center).norm() < eps {
        return Err(GeomError::CoincidentCenters);
    }
    let da = view_a.pixel_ray(px_a).normalize();
    let db = view_b.pixel_ray(px_b).normalize();
    if da.cross(&db).norm() < eps {
        return Err(GeomError::ParallelRays);
    }
    let w0 = view_a.center - view_b.center;
    let b = da.dot(&db);
    let d = da.dot(&w0);
    let e = db.dot(&w0);
    // unit directions: a = c = 1
    let denom = T::one() - b * b;
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let on_a = view_a.center + da * s;
    let on_b = view_b.center + db * t;
    Ok(Triangulation {
        point: (on_a + on_b) * T::lit(0.5),
        ray_gap: (on_a - on_b).norm(),
    })
}

/// Angle in degrees subtended at `point` by the two camera centers.
pub fn intersection_angle<T: Real>(
    point: &Vector3<T>,
    center_a: &Vector3<T>,
    center_b: &Vector3<T>,
) -> Result<T, GeomError> {
    let va = center_a - point;
    let vb = center_b - point;
    let eps = T::lit(GEOM_EPS);
    if va.norm() < eps || vb.norm() < eps {
        return Err(GeomError::DegeneratePoint);
    }
    Ok(va.cross(&vb).norm().atan2(va.dot(&vb)).deg())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::camera::tests::simple_view;
    use crate::geom::project;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3, Rotation3, Unit};
    use proptest::prelude::*;

    fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> CameraView<f64> {
        let z = (target - center).normalize();
        let helper = if z.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let x = helper.cross(&z).normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        simple_view(1000.0, 500.0, r, center)
    }

    /// Closed-form nearest points between two lines, solved independently via
    /// the 2x2 normal equations with unnormalised directions.
    fn nearest_points(
        o1: Vector3<f64>,
        d1: Vector3<f64>,
        o2: Vector3<f64>,
        d2: Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let m = nalgebra::Matrix2::new(d1.dot(&d1), -d1.dot(&d2), d1.dot(&d2), -d2.dot(&d2));
        let rhs = nalgebra::Vector2::new((o2 - o1).dot(&d1), (o2 - o1).dot(&d2));
        let st = m.lu().solve(&rhs).unwrap();
        (o1 + d1 * st.x, o2 + d2 * st.y)
    }

    #[test]
    fn exact_intersection() {
        let target = Vector3::new(3.0, 4.0, 50.0);
        let a = look_at(Vector3::new(-10.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 50.0));
        let b = look_at(Vector3::new(12.0, 3.0, 1.0), Vector3::new(0.0, 0.0, 50.0));
        let tri = triangulate(
            &project(&target, &a).unwrap(),
            &a,
            &project(&target, &b).unwrap(),
            &b,
        )
        .unwrap();
        assert_abs_diff_eq!(tri.point, target, epsilon = 1e-9);
        assert_abs_diff_eq!(tri.ray_gap, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn skew_rays_use_common_perpendicular() {
        let target = Vector3::new(0.0, 0.0, 10.0);
        let a = look_at(Vector3::new(-1.0, 0.0, 0.0), target);
        // aim b so that its ray misses the target by 0.02 m along y
        let b = look_at(
            Vector3::new(1.0, 0.0, 0.0),
            target + Vector3::new(0.0, 0.02, 0.0),
        );
        let pa = project(&target, &a).unwrap();
        let pb = project(&(target + Vector3::new(0.0, 0.02, 0.0)), &b).unwrap();
        let tri = triangulate(&pa, &a, &pb, &b).unwrap();
        let (qa, qb) = nearest_points(a.center, a.pixel_ray(&pa), b.center, b.pixel_ray(&pb));
        assert_abs_diff_eq!(tri.point, (qa + qb) * 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(tri.ray_gap, (qa - qb).norm(), epsilon = 1e-9);
        assert!(tri.ray_gap > 0.0 && tri.ray_gap <= 0.02 + 1e-12);
        assert!((tri.point - qa).norm() <= 0.01 + 1e-12);
        assert!((tri.point - qb).norm() <= 0.01 + 1e-12);
    }

    #[test]
    fn parallel_and_coincident_rays() {
        let a = simple_view(1000.0, 500.0, Matrix3::identity(), Vector3::zeros());
        let b = simple_view(
            1000.0,
            500.0,
            Matrix3::identity(),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let px = Vector2::new(500.0, 500.0);
        assert_eq!(triangulate(&px, &a, &px, &b), Err(GeomError::ParallelRays));
        assert_eq!(
            triangulate(&px, &a, &px, &a),
            Err(GeomError::CoincidentCenters)
        );
    }

    #[test]
    fn intersection_angle_examples() {
        let o = Vector3::zeros();
        let a = intersection_angle(&o, &Vector3::x(), &Vector3::y()).unwrap();
        assert_abs_diff_eq!(a, 90.0, epsilon = 1e-12);
        assert_eq!(
            intersection_angle(&o, &Vector3::x(), &Vector3::x()).unwrap(),
            0.0
        );
        let (ca, cb) = (Vector3::new(-1.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 1.0));
        assert_abs_diff_eq!(
            intersection_angle(&o, &ca, &cb).unwrap(),
            90.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            intersection_angle(&Vector3::new(0.0, 0.0, 2.0), &ca, &cb).unwrap(),
            90.0,
            epsilon = 1e-12
        );
        let s3 = 3f64.sqrt();
        let a60 = intersection_angle(
            &o,
            &Vector3::new(-1.0, 0.0, s3),
            &Vector3::new(1.0, 0.0, s3),
        )
        .unwrap();
        assert_abs_diff_eq!(a60, 60.0, epsilon = 1e-12);
        assert_eq!(
            intersection_angle(&o, &o, &Vector3::x()),
            Err(GeomError::DegeneratePoint)
        );
    }

    proptest! {
        #[test]
        fn angle_symmetric_and_rigid_invariant(
            p in prop::array::uniform3(-50.0f64..50.0),
            a in prop::array::uniform3(-50.0f64..50.0),
            b in prop::array::uniform3(-50.0f64..50.0),
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -3.1f64..3.1,
            t in prop::array::uniform3(-100.0f64..100.0),
        ) {
            let (p, a, b) = (Vector3::from(p), Vector3::from(a), Vector3::from(b));
            prop_assume!((p - a).norm() > 1e-3 && (p - b).norm() > 1e-3);
            prop_assume!(Vector3::from(axis).norm() > 1e-3);
            let ab = intersection_angle(&p, &a, &b).unwrap();
            let ba = intersection_angle(&p, &b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle);
            let tr = |v: Vector3<f64>| rot * v + Vector3::from(t);
            let moved = intersection_angle(&tr(p), &tr(a), &tr(b)).unwrap();
            prop_assert!((moved - ab).abs() < 1e-9);
        }

        #[test]
        fn noise_free_round_trip(
            x in -20.0f64..20.0, y in -20.0f64..20.0, z in 30.0f64..80.0,
            cx in 2.0f64..15.0,
        ) {
            let target = Vector3::new(x, y, z);
            let a = look_at(Vector3::new(-cx, 0.0, 0.0), Vector3::new(0.0, 0.0, 50.0));
            let b = look_at(Vector3::new(cx, 1.0, 0.5), Vector3::new(0.0, 0.0, 50.0));
            let tri = triangulate(&project(&target, &a).unwrap(), &a, &project(&target, &b).unwrap(), &b).unwrap();
            prop_assert!((tri.point - target).norm() < 1e-6);
        }
    }
}
