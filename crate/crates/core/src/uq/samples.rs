use std::collections::HashMap;

use log::warn;
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::UqError;
use crate::fusion::{FusedPoint, PairDepthMap};
use crate::geom::{CameraView, GeomError};

/// Selections smaller than this give unreliable fits.
const SMALL_SELECTION: usize = 1000;

/// One reprojection residual of a fused point in a neighbour view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionSample {
    pub point_index: usize,
    pub base_image: u32,
    /// (col, row) in the base image.
    pub base_pixel: [u32; 2],
    pub neighbor_id: u32,
    pub energy: f32,
    /// Pixels.
    pub r: f64,
}

/// Distance between the projection of `point` into `view` and the matcher's
/// correspondence there.
pub fn reprojection_error(
    point: &Vector3<f64>,
    view: &CameraView<f64>,
    correspondence: &Vector2<f64>,
) -> Result<f64, GeomError> {
    Ok((view.project(point)? - correspondence).norm())
}

/// Indices of points with at least `min_rays` rays whose position projects
/// back into its own base pixel within one pixel.
pub fn select_pseudo_gt(
    points: &[FusedPoint],
    views: &[CameraView<f64>],
    min_rays: u8,
) -> Result<Vec<usize>, UqError> {
    if min_rays < 3 {
        return Err(UqError::InvalidParams(format!(
            "min_rays must be at least 3, got {min_rays}"
        )));
    }
    let by_id: HashMap<u32, &CameraView<f64>> = views.iter().map(|v| (v.image_id, v)).collect();
    let selected: Vec<usize> = points
        .par_iter()
        .enumerate()
        .filter(|(_, p)| {
            p.num_rays >= min_rays
                && by_id.get(&p.source_image).is_some_and(|v| {
                    let px = Vector2::new(p.source_pixel[0] as f64, p.source_pixel[1] as f64);
                    reprojection_error(&p.position, v, &px).is_ok_and(|r| r < 1.0)
                })
        })
        .map(|(i, _)| i)
        .collect();
    if selected.len() < SMALL_SELECTION {
        warn!(
            "only {} pseudo ground truth points selected",
            selected.len()
        );
    }
    Ok(selected)
}

/// One sample per (selected point, contributing neighbour) with a valid
/// correspondence, in point order.
pub fn collect_samples(
    points: &[FusedPoint],
    selected: &[usize],
    views: &[CameraView<f64>],
    maps: &[PairDepthMap],
) -> Vec<ReprojectionSample> {
    let by_id: HashMap<u32, &CameraView<f64>> = views.iter().map(|v| (v.image_id, v)).collect();
    let by_pair: HashMap<(u32, u32), &PairDepthMap> = maps
        .iter()
        .map(|m| ((m.base_id, m.neighbor_id), m))
        .collect();
    selected
        .par_iter()
        .flat_map_iter(|&i| {
            let p = &points[i];
            let [x, y] = p.source_pixel;
            let (by_id, by_pair) = (&by_id, &by_pair);
            p.contributing_pair_ids.iter().filter_map(move |&j| {
                let map = by_pair.get(&(p.source_image, j))?;
                let view = by_id.get(&j)?;
                let corr = map.correspondence(x as usize, y as usize)?;
                let r = reprojection_error(&p.position, view, &corr).ok()?;
                Some(ReprojectionSample {
                    point_index: i,
                    base_image: p.source_image,
                    base_pixel: p.source_pixel,
                    neighbor_id: j,
                    energy: map.energy[y as usize * map.width + x as usize],
                    r,
                })
            })
        })
        .collect()
}
