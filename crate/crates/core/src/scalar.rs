//! Scalar abstraction shared by the geometric and statistical kernels.

use std::fmt::Debug;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the geometry, registration and Gamma-fitting code is
/// generic over. Implemented for `f32` and `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    #[inline]
    fn deg(self) -> Self {
        self * Self::lit(180.0) / Self::pi()
    }

    #[inline]
    fn rad(self) -> Self {
        self * Self::pi() / Self::lit(180.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}
