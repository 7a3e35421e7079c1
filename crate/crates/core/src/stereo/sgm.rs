use serde::{Deserialize, Serialize};

use super::cost::SENTINEL_FLAG;
use super::{CensusWindow, CostVolume, StereoError};
use crate::raster::Raster;

/// Semi-global matching parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgmParams {
    /// Penalty for disparity changes of one pixel between path neighbours.
    pub lambda_p1: u16,
    /// Penalty for larger jumps.
    pub lambda_p2: u16,
    /// Number of aggregation paths: 8, 4 (horizontal and vertical), or 1
    /// (left to right only, for diagnostics).
    pub path_count: usize,
    pub pyramid_levels: usize,
    /// Half-width of the disparity band searched around the upsampled coarse
    /// estimate at finer pyramid levels.
    pub search_band: usize,
    pub census_window: CensusWindow,
    /// Scale P2 down across intensity edges of the guide image.
    pub adaptive_p2: bool,
    pub subpixel: bool,
}

impl Default for SgmParams {
    fn default() -> Self {
        Self {
            lambda_p1: 8,
            lambda_p2: 32,
            path_count: 8,
            pyramid_levels: 4,
            search_band: 4,
            census_window: CensusWindow::default(),
            adaptive_p2: true,
            subpixel: true,
        }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<(), StereoError> {
        if self.lambda_p1 > self.lambda_p2 {
            return Err(StereoError::InvalidParams(format!(
                "lambda_p1 {} exceeds lambda_p2 {}",
                self.lambda_p1, self.lambda_p2
            )));
        }
        if ![1, 4, 8].contains(&self.path_count) {
            return Err(StereoError::InvalidParams(format!(
                "path_count {} not in {{1, 4, 8}}",
                self.path_count
            )));
        }
        if self.pyramid_levels == 0 {
            return Err(StereoError::InvalidParams(
                "pyramid_levels must be at least 1".into(),
            ));
        }
        if self.search_band == 0 {
            return Err(StereoError::InvalidParams(
                "search_band must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn directions(&self) -> &'static [(i32, i32)] {
        const ALL: [(i32, i32); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (-1, 1),
            (1, -1),
            (-1, -1),
        ];
        match self.path_count {
            1 => &ALL[..1],
            4 => &ALL[..4],
            _ => &ALL,
        }
    }
}

/// Per-pixel disparities (NaN = invalid) and DIM energies (NaN where invalid).
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    pub d_min: i32,
    pub d_max: i32,
    pub disparity: Vec<f32>,
    pub energy: Vec<f32>,
}

impl DisparityMap {
    pub fn invalid(width: usize, height: usize, d_min: i32, d_max: i32) -> Self {
        Self {
            width,
            height,
            d_min,
            d_max,
            disparity: vec![f32::NAN; width * height],
            energy: vec![f32::NAN; width * height],
        }
    }

    #[inline]
    pub fn disparity(&self, x: usize, y: usize) -> Option<f32> {
        let d = self.disparity[y * self.width + x];
        (!d.is_nan()).then_some(d)
    }

    #[inline]
    pub fn energy(&self, x: usize, y: usize) -> Option<f32> {
        let e = self.energy[y * self.width + x];
        (!e.is_nan()).then_some(e)
    }

    pub fn valid_count(&self) -> usize {
        self.disparity.iter().filter(|d| !d.is_nan()).count()
    }

    /// Mirrors the map left to right, keeping disparity values.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            let row = y * self.width;
            out.disparity[row..row + self.width].reverse();
            out.energy[row..row + self.width].reverse();
        }
        out
    }
}

/// Aggregates `cost` along the configured scanline paths and picks, per
/// pixel, the disparity minimising the path-summed cost.
///
/// With a `guide` raster and `adaptive_p2`, P2 is reduced across intensity
/// edges as `P2 * 8 / (8 + |dI|)`, kept within `[P1 + 1, P2]`.
pub fn sgm_aggregate(
    cost: &CostVolume,
    params: &SgmParams,
    guide: Option<&Raster>,
) -> Result<DisparityMap, StereoError> {
    params.validate()?;
    let (w, h, span) = (cost.width(), cost.height(), cost.span());
    if let Some(g) = guide {
        if g.width() != w || g.height() != h {
            return Err(StereoError::DimensionMismatch(format!(
                "guide {}x{} vs cost volume {}x{}",
                g.width(),
                g.height(),
                w,
                h
            )));
        }
    }
    let guide = guide.filter(|_| params.adaptive_p2);
    let mut sum = vec![0u32; w * h * span];
    for &dir in params.directions() {
        aggregate_path(cost, params, guide, dir, &mut sum);
    }

    let mut out = DisparityMap::invalid(w, h, cost.d_min(), cost.d_max());
    for p in 0..w * h {
        let s = &sum[p * span..(p + 1) * span];
        let mut best = 0;
        for i in 1..span {
            if s[i] < s[best] {
                best = i;
            }
        }
        if cost.pixel_entries(p)[best] & SENTINEL_FLAG != 0 {
            continue;
        }
        let mut d = (cost.pixel_base(p) + best as i32) as f64;
        if params.subpixel && best > 0 && best + 1 < span {
            let (a, b, c) = (s[best - 1] as f64, s[best] as f64, s[best + 1] as f64);
            let denom = a - 2.0 * b + c;
            if denom > 0.0 {
                d += (a - c) / (2.0 * denom);
            }
        }
        out.disparity[p] = d as f32;
        out.energy[p] = s[best] as f32;
    }
    Ok(out)
}

fn aggregate_path(
    cost: &CostVolume,
    params: &SgmParams,
    guide: Option<&Raster>,
    (dx, dy): (i32, i32),
    sum: &mut [u32],
) {
    let (w, h, span) = (cost.width(), cost.height(), cost.span());
    let p1 = params.lambda_p1 as u32;
    let p2 = params.lambda_p2 as u32;
    // L of the previous and current row; horizontal paths only use `cur`
    let mut prev = vec![0u32; w * span];
    let mut cur = vec![0u32; w * span];
    let mut prev_min = vec![0u32; w];
    let mut cur_min = vec![0u32; w];
    // predecessor L padded with u32::MAX on both sides
    let mut lq = vec![u32::MAX; span + 2];
    for yi in 0..h {
        let y = if dy < 0 { h - 1 - yi } else { yi };
        for xi in 0..w {
            let x = if dx < 0 { w - 1 - xi } else { xi };
            let p = y * w + x;
            let px = x as i64 - dx as i64;
            let py = y as i64 - dy as i64;
            let entries = cost.pixel_entries(p);
            let mut m = u32::MAX;
            if px < 0 || px >= w as i64 || py < 0 || py >= h as i64 {
                let out = &mut cur[x * span..(x + 1) * span];
                for (o, &c) in out.iter_mut().zip(entries) {
                    *o = (c & !SENTINEL_FLAG) as u32;
                    m = m.min(*o);
                }
            } else {
                let (px, py) = (px as usize, py as usize);
                let q = py * w + px;
                let mq = if dy == 0 {
                    lq[1..=span].copy_from_slice(&cur[px * span..(px + 1) * span]);
                    cur_min[px]
                } else {
                    lq[1..=span].copy_from_slice(&prev[px * span..(px + 1) * span]);
                    prev_min[px]
                };
                let pen2 = match guide {
                    Some(g) => {
                        let di = (g.data()[p] as i32 - g.data()[q] as i32).unsigned_abs();
                        ((p2 * 8) / (8 + di)).max(p1 + 1).min(p2)
                    }
                    None => p2,
                };
                let far = mq.saturating_add(pen2);
                let shift = (cost.pixel_base(p) - cost.pixel_base(q)) as i64;
                let out = &mut cur[x * span..(x + 1) * span];
                if shift == 0 {
                    for i in 0..span {
                        let best = lq[i + 1]
                            .min(lq[i].saturating_add(p1))
                            .min(lq[i + 2].saturating_add(p1))
                            .min(far);
                        let v = (entries[i] & !SENTINEL_FLAG) as u32 + best - mq;
                        out[i] = v;
                        m = m.min(v);
                    }
                } else {
                    // padded index of disparity d in the predecessor band is d - base(q) + 1
                    let at = |k: i64| {
                        if (0..(span + 2) as i64).contains(&k) {
                            lq[k as usize]
                        } else {
                            u32::MAX
                        }
                    };
                    for i in 0..span {
                        let j = i as i64 + shift + 1;
                        let best = at(j)
                            .min(at(j - 1).saturating_add(p1))
                            .min(at(j + 1).saturating_add(p1))
                            .min(far);
                        let v = (entries[i] & !SENTINEL_FLAG) as u32 + best - mq;
                        out[i] = v;
                        m = m.min(v);
                    }
                }
            }
            cur_min[x] = m;
            let s = &mut sum[p * span..(p + 1) * span];
            for (a, &l) in s.iter_mut().zip(&cur[x * span..(x + 1) * span]) {
                *a += l;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut prev_min, &mut cur_min);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::{census_transform, matching_cost};
    use rand::{Rng, SeedableRng};

    fn params(p1: u16, p2: u16, paths: usize) -> SgmParams {
        SgmParams {
            lambda_p1: p1,
            lambda_p2: p2,
            path_count: paths,
            subpixel: false,
            ..SgmParams::default()
        }
    }

    fn random_volume(w: usize, h: usize, d: i32, seed: u64, sentinel_rate: f64) -> CostVolume {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CostVolume::from_fn(w, h, 0, d - 1, 62, |_, _, _| {
            if rng.random::<f64>() < sentinel_rate {
                None
            } else {
                Some(rng.random_range(0..=62))
            }
        })
        .unwrap()
    }

    #[test]
    fn zero_penalties_reduce_to_winner_take_all() {
        let vol = random_volume(30, 20, 12, 5, 0.05);
        let map = sgm_aggregate(&vol, &params(0, 0, 8), None).unwrap();
        for y in 0..20 {
            for x in 0..30 {
                // WTA over the raw entries, sentinels counted at max cost
                let costs: Vec<u16> = (0..12).map(|d| vol.aggregation_cost(x, y, d)).collect();
                let wta = (0..12).min_by_key(|&d| (costs[d as usize], d)).unwrap();
                match map.disparity(x, y) {
                    Some(d) => assert_eq!(d, wta as f32),
                    None => assert_eq!(vol.cost(x, y, wta), None),
                }
            }
        }
    }

    #[test]
    fn hand_dynamic_programming_table() {
        let table = [[0u16, 5], [5, 0], [0, 5]];
        let vol =
            CostVolume::from_fn(3, 1, 0, 1, 62, |x, _, d| Some(table[x][d as usize])).unwrap();
        let p = SgmParams {
            lambda_p1: 1,
            lambda_p2: 2,
            path_count: 1,
            ..SgmParams::default()
        };
        let map = sgm_aggregate(&vol, &p, None).unwrap();
        // L0 = [0, 5]; L1 = [5, 1]; L2 = [1, 5]
        assert_eq!(map.disparity, vec![0.0, 1.0, 0.0]);
        assert_eq!(map.energy, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn all_sentinel_pixels_are_invalid() {
        let vol = CostVolume::from_fn(5, 4, 0, 3, 62, |x, _, _| (x != 2).then_some(10)).unwrap();
        let map = sgm_aggregate(&vol, &SgmParams::default(), None).unwrap();
        for y in 0..4 {
            assert!(map.disparity(2, y).is_none());
            assert!(map.energy(2, y).is_none());
            assert!(map.disparity(1, y).is_some());
        }
    }

    #[test]
    fn recovers_constant_shift_on_random_texture() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let left = Raster::from_fn(120, 60, |_, _| rng.random());
        let right = Raster::from_fn(120, 60, |x, y| left.get((x + 7).min(119), y));
        let win = CensusWindow::default();
        let vol = matching_cost(
            &census_transform(&left, win).unwrap(),
            &census_transform(&right, win).unwrap(),
            0,
            20,
        )
        .unwrap();
        let map = sgm_aggregate(&vol, &SgmParams::default(), Some(&left)).unwrap();
        let (mut ok, mut n) = (0, 0);
        for y in 3..57 {
            for x in 4 + 20..120 - 4 - 7 {
                if let Some(d) = map.disparity(x, y) {
                    n += 1;
                    ok += ((d - 7.0).abs() <= 1.0) as usize;
                }
            }
        }
        assert!(n > 3000);
        assert!(ok as f64 >= 0.99 * n as f64, "{ok}/{n}");
    }

    #[test]
    fn horizontal_flip_equivariance() {
        let vol = random_volume(25, 17, 9, 3, 0.02);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let guide = Raster::from_fn(25, 17, |_, _| rng.random());
        let p = SgmParams::default();
        let direct = sgm_aggregate(&vol, &p, Some(&guide)).unwrap();
        let flipped =
            sgm_aggregate(&vol.flip_horizontal(), &p, Some(&guide.flip_horizontal())).unwrap();
        assert_eq!(flipped.flip_horizontal(), direct);
    }

    #[test]
    fn subpixel_stays_within_range_and_energy_nonnegative() {
        let vol = random_volume(20, 20, 8, 9, 0.0);
        let map = sgm_aggregate(&vol, &SgmParams::default(), None).unwrap();
        for (d, e) in map.disparity.iter().zip(&map.energy) {
            assert!((0.0..=7.0).contains(d));
            assert!(*e >= 0.0 && e.is_finite());
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let vol = random_volume(4, 4, 2, 1, 0.0);
        assert!(sgm_aggregate(&vol, &params(9, 8, 8), None).is_err());
        assert!(sgm_aggregate(&vol, &params(1, 8, 2), None).is_err());
    }
}
