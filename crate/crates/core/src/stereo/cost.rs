use super::{CensusMap, StereoError};

/// Flag bit marking entries whose correspondence is out of bounds or invalid.
pub(crate) const SENTINEL_FLAG: u16 = 0x8000;

/// Matching costs `C(p, d)` in Hamming units.
///
/// Every pixel carries the same number of candidate disparities (`span`),
/// starting at a per-pixel offset. A full-range volume uses `d_min` for every
/// pixel; coarse-to-fine matching uses narrow bands around a prediction.
/// Sentinel entries hold `max_cost` for aggregation purposes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    d_min: i32,
    d_max: i32,
    span: usize,
    max_cost: u16,
    base: Vec<i32>,
    costs: Vec<u16>,
}

impl CostVolume {
    /// Builds a full-range volume from a cost function; `None` marks a sentinel.
    pub fn from_fn(
        width: usize,
        height: usize,
        d_min: i32,
        d_max: i32,
        max_cost: u16,
        mut f: impl FnMut(usize, usize, i32) -> Option<u16>,
    ) -> Result<Self, StereoError> {
        if d_max < d_min {
            return Err(StereoError::EmptyDisparityRange(d_min, d_max));
        }
        let span = (d_max - d_min + 1) as usize;
        let mut costs = Vec::with_capacity(width * height * span);
        for y in 0..height {
            for x in 0..width {
                for d in d_min..=d_max {
                    costs.push(match f(x, y, d) {
                        Some(c) => c.min(max_cost),
                        None => max_cost | SENTINEL_FLAG,
                    });
                }
            }
        }
        Ok(Self {
            width,
            height,
            d_min,
            d_max,
            span,
            max_cost,
            base: vec![d_min; width * height],
            costs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_min(&self) -> i32 {
        self.d_min
    }

    pub fn d_max(&self) -> i32 {
        self.d_max
    }

    /// Candidate disparities per pixel.
    pub fn span(&self) -> usize {
        self.span
    }

    pub fn max_cost(&self) -> u16 {
        self.max_cost
    }

    /// First candidate disparity of pixel `(x, y)`.
    #[inline]
    pub fn base(&self, x: usize, y: usize) -> i32 {
        self.base[y * self.width + x]
    }

    /// Cost at `(x, y, d)`; `None` when `d` is outside the pixel's band or the
    /// entry is a sentinel.
    pub fn cost(&self, x: usize, y: usize, d: i32) -> Option<u16> {
        let i = d - self.base(x, y);
        if i < 0 || i as usize >= self.span {
            return None;
        }
        let c = self.costs[(y * self.width + x) * self.span + i as usize];
        (c & SENTINEL_FLAG == 0).then_some(c)
    }

    /// Cost used for aggregation: sentinels count as `max_cost`, out-of-band
    /// disparities are clamped to the band edge.
    pub fn aggregation_cost(&self, x: usize, y: usize, d: i32) -> u16 {
        let i = (d - self.base(x, y)).clamp(0, self.span as i32 - 1) as usize;
        self.costs[(y * self.width + x) * self.span + i] & !SENTINEL_FLAG
    }

    #[inline]
    pub(crate) fn pixel_entries(&self, p: usize) -> &[u16] {
        &self.costs[p * self.span..(p + 1) * self.span]
    }

    #[inline]
    pub(crate) fn pixel_base(&self, p: usize) -> i32 {
        self.base[p]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = y * self.width + x;
                let dst = y * self.width + (self.width - 1 - x);
                out.base[dst] = self.base[src];
                out.costs[dst * self.span..(dst + 1) * self.span]
                    .copy_from_slice(self.pixel_entries(src));
            }
        }
        out
    }
}

fn check_pair(left: &CensusMap, right: &CensusMap) -> Result<(), StereoError> {
    if left.height() != right.height() || left.width() != right.width() {
        return Err(StereoError::DimensionMismatch(format!(
            "left {}x{} vs right {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    if left.window() != right.window() {
        return Err(StereoError::DimensionMismatch(
            "census windows differ".into(),
        ));
    }
    Ok(())
}

/// Hamming cost between `left(x, y)` and `right(x - d, y)` for every
/// disparity in `[d_min, d_max]`.
pub fn matching_cost(
    left: &CensusMap,
    right: &CensusMap,
    d_min: i32,
    d_max: i32,
) -> Result<CostVolume, StereoError> {
    if d_max < d_min {
        return Err(StereoError::EmptyDisparityRange(d_min, d_max));
    }
    let span = (d_max - d_min + 1) as usize;
    let base = vec![d_min; left.width() * left.height()];
    matching_cost_banded(left, right, base, span, d_min, d_max)
}

/// Like [`matching_cost`], but each pixel searches `span` disparities starting
/// at its own `base[y * width + x]`.
pub fn matching_cost_banded(
    left: &CensusMap,
    right: &CensusMap,
    base: Vec<i32>,
    span: usize,
    d_min: i32,
    d_max: i32,
) -> Result<CostVolume, StereoError> {
    check_pair(left, right)?;
    if span == 0 || d_max < d_min {
        return Err(StereoError::EmptyDisparityRange(d_min, d_max));
    }
    let (w, h) = (left.width(), left.height());
    if base.len() != w * h {
        return Err(StereoError::DimensionMismatch(
            "band offsets do not match raster".into(),
        ));
    }
    let max_cost = left.window().bit_count() as u16;
    let sentinel = max_cost | SENTINEL_FLAG;
    let (lbits, lvalid) = left.raw();
    let (rbits, rvalid) = right.raw();
    let mut costs = vec![sentinel; w * h * span];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !lvalid[p] {
                continue;
            }
            let code = lbits[p];
            let out = &mut costs[p * span..(p + 1) * span];
            for (i, slot) in out.iter_mut().enumerate() {
                let xr = x as i64 - (base[p] as i64 + i as i64);
                if xr < 0 || xr >= w as i64 {
                    continue;
                }
                let q = y * w + xr as usize;
                if rvalid[q] {
                    *slot = (code ^ rbits[q]).count_ones() as u16;
                }
            }
        }
    }
    Ok(CostVolume {
        width: w,
        height: h,
        d_min,
        d_max,
        span,
        max_cost,
        base,
        costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use crate::stereo::{census_transform, CensusWindow};
    use rand::{Rng, SeedableRng};

    fn random_raster(w: usize, h: usize, seed: u64) -> Raster {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, |_, _| rng.random())
    }

    #[test]
    fn identical_images_cost_zero_at_zero_disparity() {
        let r = random_raster(40, 30, 1);
        let c = census_transform(&r, CensusWindow::default()).unwrap();
        let vol = matching_cost(&c, &c, 0, 5).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                if c.is_valid(x, y) {
                    assert_eq!(vol.cost(x, y, 0), Some(0));
                } else {
                    assert_eq!(vol.cost(x, y, 0), None);
                }
            }
        }
    }

    #[test]
    fn exact_shift_is_free_at_true_disparity() {
        let left = random_raster(80, 30, 2);
        let right = Raster::from_fn(80, 30, |x, y| left.get((x + 7).min(79), y));
        let w = CensusWindow::default();
        let (cl, cr) = (
            census_transform(&left, w).unwrap(),
            census_transform(&right, w).unwrap(),
        );
        let vol = matching_cost(&cl, &cr, 0, 15).unwrap();
        let mut nonzero_elsewhere = 0;
        let mut total = 0;
        for y in 3..27 {
            for x in 4 + 7..80 - 4 - 7 {
                assert_eq!(vol.cost(x, y, 7), Some(0));
                total += 1;
                nonzero_elsewhere += (vol.cost(x, y, 3).unwrap() > 0) as usize;
            }
        }
        assert!(nonzero_elsewhere as f64 > 0.95 * total as f64);
        // correspondences left of the right image border are sentinels
        assert_eq!(vol.cost(10, 10, 15), None);
        assert_eq!(vol.aggregation_cost(10, 10, 15), 62);
    }

    #[test]
    fn single_flipped_bit_costs_one() {
        let patch = [1u8, 2, 3, 4, 5, 6, 7, 8, 9];
        let left = Raster::from_fn(
            4,
            4,
            |x, y| if x < 3 && y < 3 { patch[y * 3 + x] } else { 0 },
        );
        // raise neighbour "1" above the centre: one census bit flips
        let right = Raster::from_fn(4, 4, |x, y| {
            if (x, y) == (0, 0) {
                200
            } else {
                left.get(x, y)
            }
        });
        let w = CensusWindow {
            width: 3,
            height: 3,
        };
        let vol = matching_cost(
            &census_transform(&left, w).unwrap(),
            &census_transform(&right, w).unwrap(),
            0,
            0,
        )
        .unwrap();
        assert_eq!(vol.cost(1, 1, 0), Some(1));
    }

    #[test]
    fn empty_range_rejected() {
        let r = random_raster(20, 20, 3);
        let c = census_transform(&r, CensusWindow::default()).unwrap();
        assert_eq!(
            matching_cost(&c, &c, 5, 4),
            Err(StereoError::EmptyDisparityRange(5, 4))
        );
    }
}
