use super::{CostVolume, DisparityMap, SgmParams, StereoError};

/// Global matching energy of a disparity map: data costs at the rounded
/// disparities plus a two-level smoothness penalty over each unordered pair of
/// 4-neighbours. Differences below 0.5 px are free, below 1.5 px cost P1 and
/// larger jumps cost P2. Invalid pixels are skipped.
pub fn energy_total(
    disp: &DisparityMap,
    cost: &CostVolume,
    params: &SgmParams,
) -> Result<f64, StereoError> {
    let (w, h) = (disp.width, disp.height);
    if w != cost.width() || h != cost.height() {
        return Err(StereoError::DimensionMismatch(format!(
            "disparity {}x{} vs cost volume {}x{}",
            w,
            h,
            cost.width(),
            cost.height()
        )));
    }
    let penalty = |a: f32, b: f32| {
        let diff = (a - b).abs();
        if diff < 0.5 {
            0.0
        } else if diff < 1.5 {
            params.lambda_p1 as f64
        } else {
            params.lambda_p2 as f64
        }
    };
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let Some(d) = disp.disparity(x, y) else {
                continue;
            };
            e += cost.aggregation_cost(x, y, d.round() as i32) as f64;
            if x + 1 < w {
                if let Some(r) = disp.disparity(x + 1, y) {
                    e += penalty(d, r);
                }
            }
            if y + 1 < h {
                if let Some(b) = disp.disparity(x, y + 1) {
                    e += penalty(d, b);
                }
            }
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::sgm_aggregate;
    use rand::{Rng, SeedableRng};

    fn map(w: usize, h: usize, d: Vec<f32>) -> DisparityMap {
        DisparityMap {
            width: w,
            height: h,
            d_min: 0,
            d_max: 9,
            energy: vec![0.0; d.len()],
            disparity: d,
        }
    }

    #[test]
    fn constant_map_on_zero_costs_is_free() {
        let vol = CostVolume::from_fn(6, 4, 0, 9, 62, |_, _, _| Some(0)).unwrap();
        let e = energy_total(&map(6, 4, vec![3.0; 24]), &vol, &SgmParams::default()).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn hand_example() {
        let vol = CostVolume::from_fn(2, 1, 0, 9, 62, |x, _, d| {
            Some(match (x, d) {
                (0, 3) => 2,
                (1, 5) => 4,
                _ => 60,
            })
        })
        .unwrap();
        let e = energy_total(&map(2, 1, vec![3.0, 5.0]), &vol, &SgmParams::default()).unwrap();
        assert_eq!(e, 38.0);
    }

    #[test]
    fn penalty_levels_and_invalid_skip() {
        let vol = CostVolume::from_fn(3, 1, 0, 9, 62, |_, _, _| Some(0)).unwrap();
        let p = SgmParams::default();
        assert_eq!(
            energy_total(&map(3, 1, vec![3.0, 3.4, 4.5]), &vol, &p).unwrap(),
            8.0
        );
        assert_eq!(
            energy_total(&map(3, 1, vec![3.0, f32::NAN, 9.0]), &vol, &p).unwrap(),
            0.0
        );
    }

    #[test]
    fn dimension_mismatch() {
        let vol = CostVolume::from_fn(3, 1, 0, 9, 62, |_, _, _| Some(0)).unwrap();
        assert!(energy_total(&map(2, 1, vec![0.0; 2]), &vol, &SgmParams::default()).is_err());
    }

    #[test]
    fn sgm_lowers_energy_against_winner_take_all() {
        // smooth ground truth plus noisy costs: SGM should beat the per-pixel argmin
        let p = SgmParams {
            subpixel: false,
            adaptive_p2: false,
            ..SgmParams::default()
        };
        let wta_params = SgmParams {
            lambda_p1: 0,
            lambda_p2: 0,
            ..p.clone()
        };
        let trials = 40;
        let mut wins = 0;
        for seed in 0..trials {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let truth = rng.random_range(2..14);
            let vol = CostVolume::from_fn(24, 18, 0, 15, 62, |x, _, d| {
                let t = truth + (x / 12) as i32;
                let base = if d == t { 5 } else { 25 };
                Some((base + rng.random_range(0..30)).min(62))
            })
            .unwrap();
            let sgm = sgm_aggregate(&vol, &p, None).unwrap();
            let wta = sgm_aggregate(&vol, &wta_params, None).unwrap();
            if energy_total(&sgm, &vol, &p).unwrap() <= energy_total(&wta, &vol, &p).unwrap() {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * trials as f64, "{wins}/{trials}");
    }
}
