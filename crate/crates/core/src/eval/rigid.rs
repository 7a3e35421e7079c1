use nalgebra::{Matrix3, Vector3};

use super::EvalError;
use crate::scalar::Real;

/// `x -> rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// `self` after `other`: `x -> self(other(x))`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in degrees.
    pub fn angle_deg(&self) -> T {
        let c = (self.rotation.trace() - T::one()) * T::lit(0.5);
        c.clamp(-T::one(), T::one()).acos().deg()
    }
}

/// Least-squares rigid motion taking `source[i]` onto `target[i]`, via the SVD
/// of the cross-covariance with the determinant correction that rules out
/// reflections.
///
/// Fails with `DegenerateGeometry` when the centred cross-covariance has rank
/// below 2 (fewer than three pairs, or colinear points): the rotation about
/// the common line is then undetermined.
pub fn estimate_rigid<T: Real>(
    source: &[Vector3<T>],
    target: &[Vector3<T>],
) -> Result<RigidTransform<T>, EvalError> {
    if source.len() != target.len() {
        return Err(EvalError::DimensionMismatch(source.len(), target.len()));
    }
    if source.len() < 3 {
        return Err(EvalError::DegenerateGeometry(format!(
            "{} point pairs",
            source.len()
        )));
    }
    let n = T::lit(source.len() as f64);
    let cs = source.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let ct = target.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let tol = T::default_epsilon().sqrt() * sv[0];
    if sv[0] <= T::zero() || sv[1] <= tol {
        return Err(EvalError::DegenerateGeometry(
            "cross-covariance rank below 2".into(),
        ));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let mut fix = Matrix3::identity();
    // flip the axis of the smallest singular value
    let smallest = (0..3)
        .min_by(|&a, &b| {
            svd.singular_values[a]
                .partial_cmp(&svd.singular_values[b])
                .expect("finite")
        })
        .expect("three values");
    fix[(smallest, smallest)] = d;
    let rotation = v * fix * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: ct - rotation * cs,
    })
}
