//! Neighbour selection, per-pair depth maps, k-of-n depth fusion and point
//! clouds carrying per-point reliability metrics.

mod cloud;
mod fuse;
mod neighbors;
mod pairs;

pub use cloud::{merge_clouds, BoundingBox, FusedPoint, PointCloud, WORLD_FRAME};
pub use fuse::{consistent_subset, fuse_image, median, DepthMap, FusionParams};
pub use neighbors::{angle_weight, select_neighbors, view_pair_angle, NeighborSet, OVERLAP_GRID};
pub use pairs::{
    match_pair, pair_depth_map, pair_depth_maps, rectify_images, PairDepthMap, PairMatch,
    PairRejection,
};

use thiserror::Error;

use crate::geom::GeomError;
use crate::stereo::StereoError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("image {base_id}: only {found} candidate neighbours with positive score, {required} required")]
    InsufficientViews {
        base_id: u32,
        found: usize,
        required: usize,
    },
    #[error("consistency count k must be at least 2, got {0}")]
    KBelowTwo(usize),
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("unknown image id {0}")]
    UnknownImage(u32),
    #[error("image {0} has no raster")]
    MissingRaster(u32),
    #[error("depth map dimensions do not match image {0}")]
    DimensionMismatch(u32),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Stereo(#[from] StereoError),
}
