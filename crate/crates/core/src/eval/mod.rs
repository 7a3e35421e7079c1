//! Accuracy evaluation against a reference cloud.

mod composition;
mod icp;
mod kdtree;
pub(crate) mod rigid;
mod stats;

pub use composition::{
    composition_angle_histogram, pair_composition_stats, CompositionRow, PairCompositionStats,
    StereoCloud,
};
pub use icp::{icp_register, IcpInit, IcpParams, IcpResult};
pub use kdtree::KdTree;
pub use rigid::{estimate_rigid, RigidTransform};
pub use stats::{
    angle_histogram, bin_by_metric, correlation_r2, error_stats, intersection_angle_histogram,
    linear_fit, per_point_error, ray_histogram, spearman, split_by_error, BinStats,
    BinnedErrorStats, ErrorSplit, ErrorStats, Histogram, LinearFit,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("reference cloud is empty")]
    EmptyReference,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("length mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("bin edges must be finite and strictly increasing")]
    NonMonotonicEdges,
    #[error("need at least 3 usable bins, got {0}")]
    InsufficientBins(usize),
}
