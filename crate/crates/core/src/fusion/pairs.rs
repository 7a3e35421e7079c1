use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use super::FusionError;
use crate::geom::{rectify_pair, CameraView, RectifiedPair};
use crate::raster::Raster;
use crate::stereo::{hierarchical_match, max_pyramid_levels, DisparityMap, SgmParams};

/// Matching result of one rectified pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatch {
    pub pair: RectifiedPair<f64>,
    pub disparity: DisparityMap,
}

/// Depths of one stereo pair resampled onto the base image grid, with the
/// pair's DIM energy and the matched pixel in the neighbour image.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDepthMap {
    pub base_id: u32,
    pub neighbor_id: u32,
    pub neighbor_center: Vector3<f64>,
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub energy: Vec<f32>,
    pub corr_x: Vec<f32>,
    pub corr_y: Vec<f32>,
}

impl PairDepthMap {
    pub fn correspondence(&self, x: usize, y: usize) -> Option<Vector2<f64>> {
        let i = y * self.width + x;
        let (cx, cy) = (self.corr_x[i], self.corr_y[i]);
        (!cx.is_nan() && !cy.is_nan()).then(|| Vector2::new(cx as f64, cy as f64))
    }
}

/// A neighbour that produced no depth map, and why.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRejection {
    pub base_id: u32,
    pub neighbor_id: u32,
    pub reason: String,
}

fn resample(
    pair: &RectifiedPair<f64>,
    view: &CameraView<f64>,
    left: bool,
) -> Result<Raster, FusionError> {
    let src = view
        .raster
        .as_ref()
        .ok_or(FusionError::MissingRaster(view.image_id))?;
    let (w, h) = (pair.width as usize, pair.height as usize);
    let mut data = vec![0u8; w * h];
    let mut mask = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let rect = Vector2::new(u as f64, v as f64);
            let px = if left {
                pair.rect_to_left(view, &rect)
            } else {
                pair.rect_to_right(view, &rect)
            };
            if let Some(val) = px.and_then(|p| src.sample_bilinear(p.x, p.y)) {
                data[v * w + u] = val.round() as u8;
                mask[v * w + u] = true;
            }
        }
    }
    Ok(Raster::new(w, h, data).with_mask(mask))
}

/// Warps both images into the rectified frame with bilinear interpolation.
/// Rectified pixels not covered by a source image are masked out.
pub fn rectify_images(
    pair: &RectifiedPair<f64>,
    left: &CameraView<f64>,
    right: &CameraView<f64>,
) -> Result<(Raster, Raster), FusionError> {
    Ok((resample(pair, left, true)?, resample(pair, right, false)?))
}

/// Rectifies and matches `base` (left) against `neighbor` (right).
pub fn match_pair(
    base: &CameraView<f64>,
    neighbor: &CameraView<f64>,
    sgm: &SgmParams,
    d_range_margin: i32,
) -> Result<PairMatch, FusionError> {
    let pair = rectify_pair(base, neighbor, d_range_margin)?;
    let (l, r) = rectify_images(&pair, base, neighbor)?;
    let levels = max_pyramid_levels(l.width(), l.height(), sgm.census_window, sgm.pyramid_levels);
    let params = SgmParams {
        pyramid_levels: levels,
        ..sgm.clone()
    };
    let disparity = hierarchical_match(&l, &r, pair.disparity_range, &params)?;
    Ok(PairMatch { pair, disparity })
}

/// Converts a rectified disparity map into depths along the base camera's
/// rays. Each base pixel takes the disparity of its nearest rectified pixel.
pub fn pair_depth_map(
    base: &CameraView<f64>,
    neighbor: &CameraView<f64>,
    m: &PairMatch,
) -> PairDepthMap {
    let (w, h) = (base.width as usize, base.height as usize);
    let pair = &m.pair;
    let disp = &m.disparity;
    let fb = pair.rectified_focal * pair.baseline;
    let mut out = PairDepthMap {
        base_id: base.image_id,
        neighbor_id: neighbor.image_id,
        neighbor_center: neighbor.center,
        width: w,
        height: h,
        depth: vec![f32::NAN; w * h],
        energy: vec![f32::NAN; w * h],
        corr_x: vec![f32::NAN; w * h],
        corr_y: vec![f32::NAN; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let px = Vector2::new(x as f64, y as f64);
            let Some(rect) = pair.left_to_rect(base, &px) else {
                continue;
            };
            let (u, v) = (rect.x.round(), rect.y.round());
            if u < 0.0 || v < 0.0 || u >= disp.width as f64 || v >= disp.height as f64 {
                continue;
            }
            let (ui, vi) = (u as usize, v as usize);
            let Some(d) = disp.disparity(ui, vi) else {
                continue;
            };
            if d <= 0.0 {
                continue;
            }
            let d = d as f64;
            let cam = Vector3::new(
                (px.x - base.principal_x) / base.focal_x,
                (px.y - base.principal_y) / base.focal_y,
                1.0,
            );
            let rz = (pair.left_rectify_rot * cam).z;
            if rz <= 0.0 {
                continue;
            }
            let depth = fb / d / rz;
            let Some(c) = pair.rect_to_right(neighbor, &Vector2::new(rect.x - d, rect.y)) else {
                continue;
            };
            if !neighbor.in_bounds(&c) {
                continue;
            }
            let i = y * w + x;
            out.depth[i] = depth as f32;
            out.energy[i] = disp
                .energy(ui, vi)
                .expect("energy valid where disparity is");
            out.corr_x[i] = c.x as f32;
            out.corr_y[i] = c.y as f32;
        }
    }
    out
}

/// Matches `base` against every neighbour in parallel. Rejected pairs are
/// reported instead of failing the whole image; output order follows
/// `neighbors`.
pub fn pair_depth_maps(
    base: &CameraView<f64>,
    neighbors: &[&CameraView<f64>],
    sgm: &SgmParams,
    d_range_margin: i32,
) -> (Vec<(PairMatch, PairDepthMap)>, Vec<PairRejection>) {
    let results: Vec<_> = neighbors
        .par_iter()
        .map(|nb| {
            match_pair(base, nb, sgm, d_range_margin).map(|m| {
                let map = pair_depth_map(base, nb, &m);
                (m, map)
            })
        })
        .collect();
    let mut maps = Vec::new();
    let mut rejections = Vec::new();
    for (nb, r) in neighbors.iter().zip(results) {
        match r {
            Ok(v) => maps.push(v),
            Err(e) => {
                log::warn!("pair {} -> {} rejected: {e}", base.image_id, nb.image_id);
                rejections.push(PairRejection {
                    base_id: base.image_id,
                    neighbor_id: nb.image_id,
                    reason: e.to_string(),
                });
            }
        }
    }
    (maps, rejections)
}
