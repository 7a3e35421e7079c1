use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, KdTree};
use crate::scalar::Real;

/// Distance from every point to its nearest reference point.
pub fn per_point_error<T: Real>(
    points: &[Vector3<T>],
    reference: &KdTree<T>,
) -> Result<Vec<T>, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(points
        .par_iter()
        .map(|p| reference.nearest(p).expect("non-empty reference").1.sqrt())
        .collect())
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn error_stats<T: Real>(values: &[T]) -> Option<ErrorStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v.as_f64() - mean).powi(2))
        .sum::<f64>()
        / n;
    Some(ErrorStats {
        count: values.len(),
        mean,
        std: var.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lo: f64,
    /// `None` for an open last bin.
    pub hi: Option<f64>,
    pub count: usize,
    pub mae: Option<f64>,
    pub std: Option<f64>,
    pub proportion: f64,
}

/// Errors grouped by ranges of a per-point metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedErrorStats {
    pub metric: String,
    pub bins: Vec<BinStats>,
    /// Points whose metric fell outside every bin.
    pub excluded: usize,
}

impl BinnedErrorStats {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Splits `(metric, error)` pairs into half-open bins `[edges[i], edges[i+1])`;
/// with `open_last` a final bin `[edges[n-1], inf)` is added.
pub fn bin_by_metric(
    metric: &str,
    values: &[f64],
    errors: &[f64],
    edges: &[f64],
    open_last: bool,
) -> Result<BinnedErrorStats, EvalError> {
    if values.len() != errors.len() {
        return Err(EvalError::DimensionMismatch(values.len(), errors.len()));
    }
    if edges.is_empty()
        || edges.windows(2).any(|w| !(w[0] < w[1]))
        || edges.iter().any(|e| !e.is_finite())
    {
        return Err(EvalError::NonMonotonicEdges);
    }
    let nbins = edges.len() - 1 + open_last as usize;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); nbins];
    let mut excluded = 0;
    for (&v, &e) in values.iter().zip(errors) {
        // index of the last edge <= v
        let k = edges.partition_point(|&edge| edge <= v);
        if k == 0 || v.is_nan() || (k == edges.len() && !open_last) {
            excluded += 1;
            continue;
        }
        groups[k - 1].push(e);
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let bins = groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let s = error_stats(g);
            BinStats {
                lo: edges[i],
                hi: edges.get(i + 1).copied(),
                count: g.len(),
                mae: s.map(|s| s.mean),
                std: s.map(|s| s.std),
                proportion: if total > 0 {
                    g.len() as f64 / total as f64
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(BinnedErrorStats {
        metric: metric.to_string(),
        bins,
        excluded,
    })
}

/// Counts over half-open bins with an overflow count above the last edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Self {
        let n = edges.len().saturating_sub(1);
        Self {
            edges,
            counts: vec![0; n],
            underflow: 0,
            overflow: 0,
        }
    }

    /// `count` bins of width `step` starting at `start`.
    pub fn uniform(start: f64, step: f64, count: usize) -> Self {
        Self::new((0..=count).map(|i| start + step * i as f64).collect())
    }

    pub fn add(&mut self, v: f64) {
        let k = self.edges.partition_point(|&e| e <= v);
        if k == 0 {
            self.underflow += 1;
        } else if k >= self.edges.len() {
            self.overflow += 1;
        } else {
            self.counts[k - 1] += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }

    /// Lower edge of the most populated bin (lowest on ties).
    pub fn mode(&self) -> Option<f64> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| {
            self.edges[self
                .counts
                .iter()
                .position(|&c| c == max)
                .expect("max exists")]
        })
    }
}

/// Ray-count histogram with one bin per integer in `3..=11`.
pub fn ray_histogram(rays: impl IntoIterator<Item = u8>) -> Histogram {
    let mut h = Histogram::uniform(3.0, 1.0, 9);
    rays.into_iter().for_each(|r| h.add(r as f64));
    h
}

/// Intersection-angle histogram: 5 degree bins over `[0, 50)` plus overflow.
pub fn angle_histogram(angles: impl IntoIterator<Item = f64>) -> Histogram {
    let mut h = Histogram::uniform(0.0, 5.0, 10);
    angles.into_iter().for_each(|a| h.add(a));
    h
}

/// 5 degree bins over `[0, 60)` plus overflow, as used for stereo-pair angles.
pub fn intersection_angle_histogram(angles: impl IntoIterator<Item = f64>) -> Histogram {
    let mut h = Histogram::uniform(0.0, 5.0, 12);
    angles.into_iter().for_each(|a| h.add(a));
    h
}

/// Points split at an error threshold (`error >= threshold` is high).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSplit {
    pub threshold: f64,
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    pub rays_low: Histogram,
    pub rays_high: Histogram,
    pub angles_low: Histogram,
    pub angles_high: Histogram,
}

pub fn split_by_error(
    rays: &[u8],
    angles: &[f64],
    errors: &[f64],
    threshold: f64,
) -> Result<ErrorSplit, EvalError> {
    if rays.len() != errors.len() || angles.len() != errors.len() {
        return Err(EvalError::DimensionMismatch(rays.len(), errors.len()));
    }
    let (low, high): (Vec<usize>, Vec<usize>) =
        (0..errors.len()).partition(|&i| errors[i] < threshold);
    Ok(ErrorSplit {
        threshold,
        rays_low: ray_histogram(low.iter().map(|&i| rays[i])),
        rays_high: ray_histogram(high.iter().map(|&i| rays[i])),
        angles_low: angle_histogram(low.iter().map(|&i| angles[i])),
        angles_high: angle_histogram(high.iter().map(|&i| angles[i])),
        low,
        high,
    })
}

/// Least-squares line `y = slope * x + intercept` and its coefficient of
/// determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when `y` has zero variance.
    pub r_squared: Option<f64>,
}

/// Ordinary least squares of `y` on `x`; needs at least three points and
/// non-constant `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::DimensionMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(EvalError::InsufficientBins(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(EvalError::InsufficientBins(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r_squared = (syy > 0.0).then(|| 1.0 - ss_res / syy);
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// R^2 of the OLS line of `y` on `x`; `None` when `y` is constant.
pub fn correlation_r2(x: &[f64], y: &[f64]) -> Result<Option<f64>, EvalError> {
    Ok(linear_fit(x, y)?.r_squared)
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks);
/// `None` for fewer than two points or constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
