//! Pinhole cameras, projection, triangulation and stereo rectification.
//!
//! All functions here are pure and generic over the scalar type.

mod camera;
mod rectify;
mod triangulate;
mod view_class;

pub use camera::{project, CameraView};
pub use rectify::{depth_to_disparity, disparity_to_depth, rectify_pair, RectifiedPair};
pub use triangulate::{intersection_angle, triangulate, Triangulation};
pub use view_class::{classify_view, PairComposition, ViewClass, ViewKind};

use thiserror::Error;

/// Numerical floor below which depths, baselines and ray cross-products are
/// treated as zero.
pub const GEOM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point has non-positive depth in camera frame")]
    NonPositiveDepth,
    #[error("rays are parallel")]
    ParallelRays,
    #[error("camera centers coincide")]
    CoincidentCenters,
    #[error("point coincides with a camera center")]
    DegeneratePoint,
    #[error("pair rejected: {0}")]
    ExcessiveConvergence(String),
    #[error("disparity must be positive")]
    NonPositiveDisparity,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}
