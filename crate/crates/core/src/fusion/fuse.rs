use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{FusedPoint, FusionError, PairDepthMap};
use crate::geom::{intersection_angle, CameraView};

/// Fusion settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    /// Neighbours matched per base image.
    pub n_neighbors: usize,
    /// Minimum number of agreeing depth maps.
    pub k_consistency: usize,
    /// Relative depth tolerance around the subset median.
    pub eps_rel: f64,
    /// Pixels added on both sides of the prior-derived disparity range.
    pub d_range_margin: i32,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            n_neighbors: 10,
            k_consistency: 2,
            eps_rel: 0.01,
            d_range_margin: 2,
        }
    }
}

/// Per-pixel depth along the optical axis (NaN = invalid) with DIM energy.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub image_id: u32,
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub energy: Vec<f32>,
}

impl DepthMap {
    pub fn invalid(image_id: u32, width: usize, height: usize) -> Self {
        Self {
            image_id,
            width,
            height,
            depth: vec![f32::NAN; width * height],
            energy: vec![f32::NAN; width * height],
        }
    }

    #[inline]
    pub fn depth(&self, x: usize, y: usize) -> Option<f32> {
        let d = self.depth[y * self.width + x];
        (!d.is_nan()).then_some(d)
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| !d.is_nan()).count()
    }
}

/// Median of a sorted slice; even lengths average the two central values.
pub fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

fn is_consistent(sorted_subset: &[f64], eps_rel: f64) -> bool {
    let Some(m) = median(sorted_subset) else {
        return true;
    };
    let tol = eps_rel * m;
    // members are sorted, so the extremes decide
    (m - sorted_subset[0]).abs() <= tol && (sorted_subset[sorted_subset.len() - 1] - m).abs() <= tol
}

/// Indices (into `sorted`) of the largest subset whose members all lie within
/// `eps_rel` of the subset median. Among equally large subsets the
/// lexicographically smallest index list wins.
pub(crate) fn consistent_subset_sorted(sorted: &[f64], eps_rel: f64) -> Vec<usize> {
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    // a consistent subset spans at most this ratio between its extremes
    let ratio = if eps_rel < 1.0 {
        (1.0 + eps_rel) / (1.0 - eps_rel)
    } else {
        f64::INFINITY
    };
    let fits = |lo: f64, hi: f64| hi <= lo * ratio;
    let mut bound = 1;
    let mut j = 0;
    for i in 0..n {
        j = j.max(i);
        while j + 1 < n && fits(sorted[i], sorted[j + 1]) {
            j += 1;
        }
        bound = bound.max(j - i + 1);
    }
    let mut chosen = Vec::with_capacity(bound);
    let mut values = Vec::with_capacity(bound);
    for size in (1..=bound).rev() {
        if search(sorted, eps_rel, &fits, size, 0, &mut chosen, &mut values) {
            return chosen;
        }
    }
    unreachable!("single elements are always consistent")
}

fn search(
    sorted: &[f64],
    eps_rel: f64,
    fits: &impl Fn(f64, f64) -> bool,
    size: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    values: &mut Vec<f64>,
) -> bool {
    if chosen.len() == size {
        return is_consistent(values, eps_rel);
    }
    let need = size - chosen.len();
    for i in start..=sorted.len() - need {
        if let Some(&first) = values.first() {
            if !fits(first, sorted[i]) {
                break;
            }
        }
        chosen.push(i);
        values.push(sorted[i]);
        if search(sorted, eps_rel, fits, size, i + 1, chosen, values) {
            return true;
        }
        chosen.pop();
        values.pop();
    }
    false
}

/// Largest set of depths agreeing within `eps_rel` of their median, returned
/// in ascending order. NaN entries are dropped first.
pub fn consistent_subset(depths: &[f64], eps_rel: f64) -> Vec<f64> {
    let mut sorted: Vec<f64> = depths.iter().copied().filter(|d| !d.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    consistent_subset_sorted(&sorted, eps_rel)
        .into_iter()
        .map(|i| sorted[i])
        .collect()
}

/// Fuses the pair depth maps of one base image.
///
/// A pixel survives when at least `k` maps agree; its depth is the median of
/// the agreeing depths and its metrics are taken over the agreeing pairs.
pub fn fuse_image(
    base: &CameraView<f64>,
    maps: &[PairDepthMap],
    params: &FusionParams,
) -> Result<(DepthMap, Vec<FusedPoint>), FusionError> {
    if params.k_consistency < 2 {
        return Err(FusionError::KBelowTwo(params.k_consistency));
    }
    let (w, h) = (base.width as usize, base.height as usize);
    for m in maps {
        if m.width != w || m.height != h || m.base_id != base.image_id {
            return Err(FusionError::DimensionMismatch(base.image_id));
        }
    }
    let mut fused = DepthMap::invalid(base.image_id, w, h);
    let mut points = Vec::new();
    let mut cands: Vec<(f64, u32, usize)> = Vec::with_capacity(maps.len());
    let mut depths = Vec::with_capacity(maps.len());
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            cands.clear();
            for (mi, m) in maps.iter().enumerate() {
                let d = m.depth[p];
                if !d.is_nan() {
                    cands.push((d as f64, m.neighbor_id, mi));
                }
            }
            if cands.len() < params.k_consistency {
                continue;
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            depths.clear();
            depths.extend(cands.iter().map(|c| c.0));
            let subset = consistent_subset_sorted(&depths, params.eps_rel);
            if subset.len() < params.k_consistency {
                continue;
            }
            let sub_depths: Vec<f64> = subset.iter().map(|&i| depths[i]).collect();
            let z = median(&sub_depths).expect("non-empty subset");
            let position = base.backproject(&Vector2::new(x as f64, y as f64), z);
            let mut angles = Vec::with_capacity(subset.len());
            let mut energies = Vec::with_capacity(subset.len());
            let mut ids = Vec::with_capacity(subset.len());
            let mut pair_energies = Vec::with_capacity(subset.len());
            for &i in &subset {
                let m = &maps[cands[i].2];
                angles.push(intersection_angle(
                    &position,
                    &base.center,
                    &m.neighbor_center,
                )?);
                energies.push(m.energy[p] as f64);
                ids.push(m.neighbor_id);
                pair_energies.push(m.energy[p]);
            }
            angles.sort_by(f64::total_cmp);
            energies.sort_by(f64::total_cmp);
            let energy = median(&energies).expect("non-empty subset") as f32;
            fused.depth[p] = z as f32;
            fused.energy[p] = energy;
            points.push(FusedPoint {
                position,
                source_image: base.image_id,
                source_pixel: [x as u32, y as u32],
                num_rays: (subset.len() + 1) as u8,
                median_angle: median(&angles).expect("non-empty subset") as f32,
                energy,
                contributing_pair_ids: ids,
                pair_energies,
                ..FusedPoint::default()
            });
        }
    }
    Ok((fused, points))
}
