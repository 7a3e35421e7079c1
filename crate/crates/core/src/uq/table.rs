use log::warn;
use serde::{Deserialize, Serialize};

use super::{fit_gamma, ReprojectionSample, UqError};
use crate::fusion::{median, FusedPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UqParams {
    /// Energy bin width, cost units.
    pub bin_size: f64,
    pub min_samples: usize,
    pub min_rays: u8,
}

impl Default for UqParams {
    fn default() -> Self {
        Self {
            bin_size: 1000.0,
            min_samples: 200,
            min_rays: 6,
        }
    }
}

/// Gamma model of reprojection errors over the energy range `[e_lo, e_hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaModel {
    pub e_lo: f64,
    pub e_hi: f64,
    pub shape: f64,
    pub scale: f64,
    pub mean_px: f64,
    pub std_px: f64,
    pub count: usize,
    /// Spans more than one base bin.
    pub merged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UqTable {
    pub bin_size: f64,
    pub min_samples: usize,
    pub bins: Vec<GammaModel>,
}

/// Result of a table lookup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inference {
    pub model: GammaModel,
    /// Energy lay at or above the end of the last bin.
    pub extrapolated: bool,
}

/// Bins samples by energy into `[i * size, (i + 1) * size)`, merges bins with
/// fewer than `min_samples` samples into the next one (the last into the
/// previous one) and fits a Gamma model per surviving bin.
pub fn build_uq_table(
    samples: &[ReprojectionSample],
    bin_size: f64,
    min_samples: usize,
) -> Result<UqTable, UqError> {
    if !(bin_size > 0.0 && bin_size.is_finite()) {
        return Err(UqError::InvalidParams(format!(
            "bin_size must be positive, got {bin_size}"
        )));
    }
    let valid: Vec<&ReprojectionSample> = samples.iter().filter(|s| s.energy.is_finite()).collect();
    if valid.is_empty() {
        return Err(UqError::NoSamples);
    }
    let index = |e: f32| ((e.max(0.0) as f64) / bin_size).floor() as usize;
    let nbins = valid
        .iter()
        .map(|s| index(s.energy))
        .max()
        .expect("non-empty")
        + 1;
    let mut base: Vec<Vec<f64>> = vec![Vec::new(); nbins];
    for s in &valid {
        base[index(s.energy)].push(s.r);
    }
    // groups of consecutive base bins: [start, end)
    let mut groups: Vec<(usize, usize, usize)> = Vec::new();
    let (mut start, mut count) = (0, 0);
    for (i, b) in base.iter().enumerate() {
        count += b.len();
        if count >= min_samples {
            groups.push((start, i + 1, count));
            (start, count) = (i + 1, 0);
        }
    }
    if start < nbins {
        match groups.last_mut() {
            Some(last) => {
                last.1 = nbins;
                last.2 += count;
            }
            None => {
                warn!("only {count} samples, fewer than min_samples {min_samples}; fitting a single bin");
                groups.push((0, nbins, count));
            }
        }
    }
    let mut bins = Vec::with_capacity(groups.len());
    for (lo, hi, _) in groups {
        // sorted so the fit does not depend on sample order
        let mut r: Vec<f64> = base[lo..hi].concat();
        r.sort_by(f64::total_cmp);
        let fit = fit_gamma(&r)?;
        bins.push(GammaModel {
            e_lo: lo as f64 * bin_size,
            e_hi: hi as f64 * bin_size,
            shape: fit.shape,
            scale: fit.scale,
            mean_px: fit.mean(),
            std_px: fit.std(),
            count: fit.count,
            merged: hi - lo > 1,
        });
    }
    Ok(UqTable {
        bin_size,
        min_samples,
        bins,
    })
}

/// Model of the bin containing `energy`; energies past the last bin use the
/// last model and are flagged, energies below the first use the first.
pub fn infer_error(energy: f64, table: &UqTable) -> Result<Inference, UqError> {
    let last = *table.bins.last().ok_or(UqError::EmptyTable)?;
    if energy >= last.e_hi {
        return Ok(Inference {
            model: last,
            extrapolated: true,
        });
    }
    let k = table.bins.partition_point(|b| b.e_lo <= energy);
    Ok(Inference {
        model: table.bins[k.saturating_sub(1)],
        extrapolated: false,
    })
}

/// Sets the predicted error of every point to the median over its pairs of
/// the inferred mean and std. Returns the number of points without any
/// usable pair energy, whose predictions are cleared.
pub fn annotate_cloud(points: &mut [FusedPoint], table: &UqTable) -> Result<usize, UqError> {
    if table.bins.is_empty() {
        return Err(UqError::EmptyTable);
    }
    let mut unannotated = 0;
    for p in points.iter_mut() {
        let mut means = Vec::with_capacity(p.pair_energies.len());
        let mut stds = Vec::with_capacity(p.pair_energies.len());
        for &e in p.pair_energies.iter().filter(|e| e.is_finite()) {
            let m = infer_error(e as f64, table)?.model;
            means.push(m.mean_px);
            stds.push(m.std_px);
        }
        means.sort_by(f64::total_cmp);
        stds.sort_by(f64::total_cmp);
        p.predicted_error_mean_px = median(&means).map(|v| v as f32);
        p.predicted_error_std_px = median(&stds).map(|v| v as f32);
        unannotated += p.predicted_error_mean_px.is_none() as usize;
    }
    Ok(unannotated)
}
