use super::{
    census_transform, matching_cost, matching_cost_banded, sgm_aggregate, CensusWindow,
    DisparityMap, SgmParams, StereoError,
};
use crate::raster::Raster;

/// Narrowest image width accepted at the coarsest pyramid level.
pub const MIN_COARSE_WIDTH: usize = 32;

const KERNEL: [u32; 5] = [1, 4, 6, 4, 1];

/// Blurs with the binomial 5-tap kernel and keeps every second pixel.
/// Masked and out-of-image taps are dropped and the weights renormalised; an
/// output pixel is valid iff its source pixel is.
pub fn downsample(raster: &Raster) -> Raster {
    let (w, h) = (raster.width(), raster.height());
    let (ow, oh) = (w / 2, h / 2);
    let data = raster.data();
    let valid = |x: usize, y: usize| raster.is_valid(x, y);
    // horizontal pass at full resolution, fixed point (value * weight sum kept separately)
    let mut hsum = vec![0u32; w * h];
    let mut hwt = vec![0u32; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut t) = (0u32, 0u32);
            for (k, &kw) in KERNEL.iter().enumerate() {
                let xx = x as i64 + k as i64 - 2;
                if xx < 0 || xx >= w as i64 || !valid(xx as usize, y) {
                    continue;
                }
                s += kw * data[y * w + xx as usize] as u32;
                t += kw;
            }
            hsum[y * w + x] = s;
            hwt[y * w + x] = t;
        }
    }
    let mut out = Vec::with_capacity(ow * oh);
    let mut mask = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let (x, y) = (2 * ox, 2 * oy);
            let (mut s, mut t) = (0u64, 0u64);
            for (k, &kw) in KERNEL.iter().enumerate() {
                let yy = y as i64 + k as i64 - 2;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                let i = yy as usize * w + x;
                s += kw as u64 * hsum[i] as u64;
                t += kw as u64 * hwt[i] as u64;
            }
            let ok = valid(x, y) && t > 0;
            out.push(if t > 0 { ((s + t / 2) / t) as u8 } else { 0 });
            mask.push(ok);
        }
    }
    Raster::new(ow, oh, out).with_mask(mask)
}

/// Largest level count not above `requested` whose coarsest level is at
/// least [`MIN_COARSE_WIDTH`] wide and taller than the census window.
pub fn max_pyramid_levels(
    width: usize,
    height: usize,
    window: CensusWindow,
    requested: usize,
) -> usize {
    let mut levels = 1;
    while levels < requested {
        let (w, h) = (width >> levels, height >> levels);
        if w < MIN_COARSE_WIDTH || w <= window.width || h <= window.height {
            break;
        }
        levels += 1;
    }
    levels
}

fn floor_div(a: i32, s: i32) -> i32 {
    a.div_euclid(s)
}

fn ceil_div(a: i32, s: i32) -> i32 {
    -((-a).div_euclid(s))
}

/// Coarse-to-fine matching of a rectified pair over `[d_min, d_max]`.
///
/// The coarsest level searches its whole (scaled) range; every finer level
/// searches `±search_band` around twice the upsampled coarser estimate.
pub fn hierarchical_match(
    left: &Raster,
    right: &Raster,
    d_range: [i32; 2],
    params: &SgmParams,
) -> Result<DisparityMap, StereoError> {
    params.validate()?;
    let [d_min, d_max] = d_range;
    if d_max < d_min {
        return Err(StereoError::EmptyDisparityRange(d_min, d_max));
    }
    if left.width() != right.width() || left.height() != right.height() {
        return Err(StereoError::DimensionMismatch(format!(
            "left {}x{} vs right {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    let levels = params.pyramid_levels;
    let (cw, ch) = (left.width() >> (levels - 1), left.height() >> (levels - 1));
    if cw < MIN_COARSE_WIDTH
        || cw <= params.census_window.width
        || ch <= params.census_window.height
    {
        return Err(StereoError::ImageTooSmall {
            width: left.width(),
            height: left.height(),
            levels,
        });
    }

    let mut lefts = vec![left.clone()];
    let mut rights = vec![right.clone()];
    for _ in 1..levels {
        lefts.push(downsample(lefts.last().unwrap()));
        rights.push(downsample(rights.last().unwrap()));
    }

    let mut coarser: Option<DisparityMap> = None;
    for level in (0..levels).rev() {
        let scale = 1i32 << level;
        let (lo, hi) = (floor_div(d_min, scale), ceil_div(d_max, scale));
        let (l, r) = (&lefts[level], &rights[level]);
        let cl = census_transform(l, params.census_window)?;
        let cr = census_transform(r, params.census_window)?;
        let cost = match &coarser {
            None => matching_cost(&cl, &cr, lo, hi)?,
            Some(prev) => {
                let span = ((2 * params.search_band + 1) as i32).min(hi - lo + 1);
                let filled = fill_invalid(prev);
                let (w, h) = (l.width(), l.height());
                let mut base = Vec::with_capacity(w * h);
                for y in 0..h {
                    for x in 0..w {
                        let px = (x / 2).min(prev.width - 1);
                        let py = (y / 2).min(prev.height - 1);
                        let pred = (2.0 * filled[py * prev.width + px]).round() as i32;
                        base.push((pred - params.search_band as i32).clamp(lo, hi - span + 1));
                    }
                }
                matching_cost_banded(&cl, &cr, base, span as usize, lo, hi)?
            }
        };
        coarser = Some(sgm_aggregate(&cost, params, Some(l))?);
    }
    Ok(coarser.expect("at least one level"))
}

/// Replaces invalid disparities by the smaller of the nearest valid values to
/// the left and right in the same row (the farther surface), falling back to
/// the median of all valid values or the middle of the range.
fn fill_invalid(map: &DisparityMap) -> Vec<f32> {
    let (w, h) = (map.width, map.height);
    let mut valid: Vec<f32> = map
        .disparity
        .iter()
        .copied()
        .filter(|d| !d.is_nan())
        .collect();
    let fallback = if valid.is_empty() {
        (map.d_min + map.d_max) as f32 / 2.0
    } else {
        valid.sort_by(f32::total_cmp);
        valid[valid.len() / 2]
    };
    let mut out = map.disparity.clone();
    for y in 0..h {
        let row = &map.disparity[y * w..(y + 1) * w];
        let mut left_val = vec![f32::NAN; w];
        let mut last = f32::NAN;
        for x in 0..w {
            if !row[x].is_nan() {
                last = row[x];
            }
            left_val[x] = last;
        }
        let mut next = f32::NAN;
        for x in (0..w).rev() {
            if !row[x].is_nan() {
                next = row[x];
                continue;
            }
            let v = match (left_val[x].is_nan(), next.is_nan()) {
                (false, false) => left_val[x].min(next),
                (false, true) => left_val[x],
                (true, false) => next,
                (true, true) => fallback,
            };
            out[y * w + x] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::{census_transform, matching_cost};
    use rand::{Rng, SeedableRng};

    /// Band-limited random texture: bilinear interpolation of a coarse noise grid.
    fn texture(seed: u64, cell: f64) -> impl Fn(f64, f64) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 256;
        let grid: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..255.0)).collect();
        move |x, y| {
            let (gx, gy) = (x / cell + 8.0, y / cell + 8.0);
            let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            let g = |i: usize, j: usize| grid[(j % n) * n + (i % n)];
            let top = g(ix, iy) * (1.0 - fx) + g(ix + 1, iy) * fx;
            let bot = g(ix, iy + 1) * (1.0 - fx) + g(ix + 1, iy + 1) * fx;
            top * (1.0 - fy) + bot * fy
        }
    }

    /// Left/right pair for a disparity field `disp(x, y)` in left coordinates.
    fn pair(w: usize, h: usize, disp: impl Fn(f64, f64) -> f64) -> (Raster, Raster, Vec<f64>) {
        let tex = texture(21, 2.5);
        let left = Raster::from_fn(w, h, |x, y| tex(x as f64, y as f64).round() as u8);
        // right(x) = left(x + d) with d evaluated at the left position, found by fixed point
        let right = Raster::from_fn(w, h, |x, y| {
            let mut xl = x as f64;
            for _ in 0..20 {
                xl = x as f64 + disp(xl, y as f64);
            }
            tex(xl, y as f64).round() as u8
        });
        let truth = (0..w * h)
            .map(|i| disp((i % w) as f64, (i / w) as f64))
            .collect();
        (left, right, truth)
    }

    fn fraction_within(map: &DisparityMap, truth: &[f64], margin: usize) -> f64 {
        let (mut ok, mut n) = (0, 0);
        for y in margin..map.height - margin {
            for x in margin..map.width - margin {
                if let Some(d) = map.disparity(x, y) {
                    n += 1;
                    ok += ((d as f64 - truth[y * map.width + x]).abs() <= 1.0) as usize;
                }
            }
        }
        assert!(n > 0);
        ok as f64 / n as f64
    }

    #[test]
    fn downsample_halves_and_preserves_constants() {
        let r = Raster::filled(33, 20, 77);
        let d = downsample(&r);
        assert_eq!((d.width(), d.height()), (16, 10));
        assert!(d.data().iter().all(|&v| v == 77));
        assert!(d.mask().is_none());
    }

    #[test]
    fn downsample_respects_mask() {
        let mask: Vec<bool> = (0..16 * 8).map(|i| i % 16 < 8).collect();
        let r = Raster::from_fn(16, 8, |x, _| if x < 8 { 100 } else { 0 }).with_mask(mask);
        let d = downsample(&r);
        for y in 0..4 {
            for x in 0..8 {
                assert_eq!(d.is_valid(x, y), x < 4);
                if x < 4 {
                    assert_eq!(d.get(x, y), 100);
                }
            }
        }
    }

    #[test]
    fn level_limit() {
        let w = CensusWindow::default();
        assert_eq!(max_pyramid_levels(640, 480, w, 4), 4);
        assert_eq!(max_pyramid_levels(160, 120, w, 4), 3);
        assert_eq!(max_pyramid_levels(40, 40, w, 4), 1);
    }

    #[test]
    fn single_level_equals_direct_aggregation() {
        let (l, r, _) = pair(96, 48, |_, _| 6.0);
        let p = SgmParams {
            pyramid_levels: 1,
            ..SgmParams::default()
        };
        let win = p.census_window;
        let vol = matching_cost(
            &census_transform(&l, win).unwrap(),
            &census_transform(&r, win).unwrap(),
            0,
            15,
        )
        .unwrap();
        let direct = sgm_aggregate(&vol, &p, Some(&l)).unwrap();
        let hier = hierarchical_match(&l, &r, [0, 15], &p).unwrap();
        assert_eq!(hier.disparity.len(), direct.disparity.len());
        for (a, b) in hier.disparity.iter().zip(&direct.disparity) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in hier.energy.iter().zip(&direct.energy) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn fronto_parallel_plane() {
        let (l, r, truth) = pair(320, 240, |_, _| 21.0);
        let map = hierarchical_match(&l, &r, [1, 48], &SgmParams::default()).unwrap();
        assert!(fraction_within(&map, &truth, 30) >= 0.95);
    }

    #[test]
    fn slanted_plane() {
        let (l, r, truth) = pair(320, 240, |x, _| 8.0 + 0.1 * x);
        let map = hierarchical_match(&l, &r, [1, 48], &SgmParams::default()).unwrap();
        assert!(fraction_within(&map, &truth, 45) >= 0.90);
    }

    #[test]
    fn too_small_for_levels() {
        let (l, r, _) = pair(100, 60, |_, _| 3.0);
        let p = SgmParams {
            pyramid_levels: 4,
            ..SgmParams::default()
        };
        assert!(matches!(
            hierarchical_match(&l, &r, [0, 8], &p),
            Err(StereoError::ImageTooSmall { .. })
        ));
    }
}
