//! Census-based semi-global matching on rectified pairs.
//!
//! The matcher emits, next to each disparity, the path-summed aggregated cost
//! at the winning disparity. That value is the per-pixel DIM energy used by the
//! reliability metrics downstream.

mod census;
mod cost;
mod energy;
mod pyramid;
mod sgm;

pub use census::{census_transform, CensusMap, CensusWindow};
pub use cost::{matching_cost, matching_cost_banded, CostVolume};
pub use energy::energy_total;
pub use pyramid::{downsample, hierarchical_match, max_pyramid_levels, MIN_COARSE_WIDTH};
pub use sgm::{sgm_aggregate, DisparityMap, SgmParams};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StereoError {
    #[error("census window {width}x{height} is invalid for a {raster_w}x{raster_h} raster")]
    WindowTooLarge {
        width: usize,
        height: usize,
        raster_w: usize,
        raster_h: usize,
    },
    #[error("disparity range [{0}, {1}] is empty")]
    EmptyDisparityRange(i32, i32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("image {width}x{height} too small for {levels} pyramid levels")]
    ImageTooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("invalid SGM parameters: {0}")]
    InvalidParams(String),
}
