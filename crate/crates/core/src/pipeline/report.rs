//! Figure- and table-analog summaries of an evaluated, annotated cloud.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StageError;
use crate::config::EvalConfig;
use crate::eval::{
    bin_by_metric, composition_angle_histogram, error_stats, intersection_angle_histogram,
    linear_fit, pair_composition_stats, spearman, split_by_error, BinnedErrorStats, ErrorSplit,
    Histogram, KdTree, LinearFit, PairCompositionStats, RigidTransform, StereoCloud,
};
use crate::fusion::PointCloud;
use crate::geom::PairComposition;
use crate::io::{format_sig6, write_csv, write_json, IoError};
use crate::uq::{ReprojectionSample, UqTable};

/// MAE per energy bin with the bin's mean energy, and the line through the
/// populated bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrend {
    pub binned: BinnedErrorStats,
    pub mean_energy: Vec<Option<f64>>,
    /// `None` with fewer than three populated bins.
    pub fit: Option<LinearFit>,
    pub bins_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleHistogram {
    /// `NN`, `NO`, `OO` or `all`.
    pub composition: String,
    /// `point` (per stereo point) or `pair` (per pair at its mean depth).
    pub level: String,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Reports {
    pub rays: Option<BinnedErrorStats>,
    pub angles: Option<BinnedErrorStats>,
    pub split: Option<ErrorSplit>,
    pub energy: Option<EnergyTrend>,
    pub angle_histograms: Vec<AngleHistogram>,
    pub table3: Option<PairCompositionStats>,
    pub uq: Option<UqTable>,
    /// Empirical mean and std of the samples in each table bin.
    pub uq_sample_stats: Vec<(f64, f64)>,
    pub summary: ReportSummary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub evaluated_points: usize,
    pub mae_m: Option<f64>,
    pub std_m: Option<f64>,
    pub energy_slope: Option<f64>,
    pub energy_r2: Option<f64>,
    /// Rank correlation of predicted pixel error and true error.
    pub prediction_spearman: Option<f64>,
    pub prediction_points: usize,
}

/// Reference inputs for the pair-composition table.
pub struct ReferenceContext<'a> {
    pub reference: &'a PointCloud,
    pub transform: RigidTransform<f64>,
}

fn energy_trend(
    energy: &[f64],
    errors: &[f64],
    cfg: &EvalConfig,
) -> Result<EnergyTrend, StageError> {
    let s = cfg.energy_bin_size;
    let top = energy.iter().copied().fold(0.0f64, f64::max);
    let n = ((top / s).floor() as usize + 1).max(1);
    let edges: Vec<f64> = (0..=n).map(|i| i as f64 * s).collect();
    let binned = bin_by_metric("dim_energy", energy, errors, &edges, false)?;
    let mut sums = vec![(0.0, 0usize); n];
    for &e in energy {
        let k = ((e / s).floor() as usize).min(n - 1);
        sums[k].0 += e;
        sums[k].1 += 1;
    }
    let mean_energy: Vec<Option<f64>> = sums
        .iter()
        .map(|&(t, c)| (c > 0).then(|| t / c as f64))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = binned
        .bins
        .iter()
        .zip(&mean_energy)
        .filter(|(b, _)| b.count >= cfg.min_bin_count)
        .map(|(b, m)| (m.expect("populated"), b.mae.expect("populated")))
        .unzip();
    let fit = if x.len() >= 3 {
        linear_fit(&x, &y).ok()
    } else {
        None
    };
    Ok(EnergyTrend {
        binned,
        mean_energy,
        fit,
        bins_used: x.len(),
    })
}

/// Builds every report whose inputs are available: error-based ones need
/// `error_m` on the cloud, the composition table needs a reference, the
/// Gamma summary needs the table and samples.
pub fn build_reports(
    cloud: &PointCloud,
    stereo: &[StereoCloud],
    pair_centers: &[(Vec3, Vec3)],
    reference: Option<ReferenceContext>,
    uq: Option<(&UqTable, &[ReprojectionSample])>,
    cfg: &EvalConfig,
) -> Result<Reports, StageError> {
    let mut rep = Reports::default();
    let evaluated: Vec<_> = cloud
        .points
        .iter()
        .filter(|p| p.error_m.is_some())
        .collect();
    let errors: Vec<f64> = evaluated
        .iter()
        .map(|p| p.error_m.expect("filtered") as f64)
        .collect();
    if !evaluated.is_empty() {
        let rays: Vec<f64> = evaluated.iter().map(|p| p.num_rays as f64).collect();
        let angles: Vec<f64> = evaluated.iter().map(|p| p.median_angle as f64).collect();
        let energy: Vec<f64> = evaluated.iter().map(|p| p.energy as f64).collect();
        rep.rays = Some(bin_by_metric(
            "num_rays",
            &rays,
            &errors,
            &cfg.ray_edges,
            true,
        )?);
        rep.angles = Some(bin_by_metric(
            "median_angle_deg",
            &angles,
            &errors,
            &cfg.angle_edges,
            true,
        )?);
        let ray_u8: Vec<u8> = evaluated.iter().map(|p| p.num_rays).collect();
        rep.split = Some(split_by_error(
            &ray_u8,
            &angles,
            &errors,
            cfg.error_threshold,
        )?);
        rep.energy = Some(energy_trend(&energy, &errors, cfg)?);
        let stats = error_stats(&errors);
        rep.summary.evaluated_points = errors.len();
        rep.summary.mae_m = stats.map(|s| s.mean);
        rep.summary.std_m = stats.map(|s| s.std);
        let fit = rep.energy.as_ref().and_then(|e| e.fit);
        rep.summary.energy_slope = fit.map(|f| f.slope);
        rep.summary.energy_r2 = fit.and_then(|f| f.r_squared);
        let (pred, err): (Vec<f64>, Vec<f64>) = evaluated
            .iter()
            .filter_map(|p| Some((p.predicted_error_mean_px? as f64, p.error_m? as f64)))
            .unzip();
        rep.summary.prediction_points = pred.len();
        rep.summary.prediction_spearman = spearman(&pred, &err);
    }
    if !stereo.is_empty() {
        for (label, filter) in
            std::iter::once(("all", None)).chain(PairComposition::ALL.map(|c| (c.label(), Some(c))))
        {
            rep.angle_histograms.push(AngleHistogram {
                composition: label.to_string(),
                level: "point".into(),
                histogram: composition_angle_histogram(stereo, filter),
            });
            let pair_angles = stereo
                .iter()
                .zip(pair_centers)
                .filter(|(s, _)| filter.is_none_or(|c| s.composition == c))
                .filter_map(|(s, (a, b))| s.pair_angle(a, b));
            rep.angle_histograms.push(AngleHistogram {
                composition: label.to_string(),
                level: "pair".into(),
                histogram: intersection_angle_histogram(pair_angles),
            });
        }
    }
    if let Some(ctx) = reference {
        if !cloud.is_empty() && !stereo.is_empty() {
            let mvs = KdTree::new(cloud.positions());
            let reference_tree = KdTree::new(ctx.reference.positions());
            let cropped = crop_stereo(stereo, ctx.reference, &ctx.transform, cfg.crop_margin);
            rep.table3 = Some(pair_composition_stats(
                &cropped,
                &mvs,
                &reference_tree,
                &ctx.transform,
            )?);
        }
    }
    if let Some((table, samples)) = uq {
        rep.uq_sample_stats = table
            .bins
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let last = i + 1 == table.bins.len();
                let r: Vec<f64> = samples
                    .iter()
                    .filter(|s| {
                        let e = (s.energy as f64).max(0.0);
                        s.energy.is_finite() && e >= b.e_lo && (e < b.e_hi || last)
                    })
                    .map(|s| s.r)
                    .collect();
                error_stats(&r).map_or((f64::NAN, f64::NAN), |s| (s.mean, s.std))
            })
            .collect();
        rep.uq = Some(table.clone());
    }
    Ok(rep)
}

type Vec3 = nalgebra::Vector3<f64>;

/// Keeps stereo points whose registered position lies inside the reference's
/// horizontal extent, as in the cloud evaluation.
fn crop_stereo(
    stereo: &[StereoCloud],
    reference: &PointCloud,
    transform: &RigidTransform<f64>,
    margin: f64,
) -> Vec<StereoCloud> {
    let Some(b) = reference.bounding_box() else {
        return Vec::new();
    };
    stereo
        .iter()
        .map(|s| {
            let keep: Vec<usize> = (0..s.points.len())
                .filter(|&i| {
                    let p = transform.apply(&s.points[i]);
                    p.x >= b.min.x - margin
                        && p.x <= b.max.x + margin
                        && p.y >= b.min.y - margin
                        && p.y <= b.max.y + margin
                })
                .collect();
            StereoCloud {
                points: keep.iter().map(|&i| s.points[i]).collect(),
                angles_deg: keep.iter().map(|&i| s.angles_deg[i]).collect(),
                base_id: s.base_id,
                neighbor_id: s.neighbor_id,
                composition: s.composition,
            }
        })
        .collect()
}

const STD_NOTE: &str = "# std columns are population standard deviations";

fn opt(v: Option<f64>) -> String {
    v.map(format_sig6).unwrap_or_default()
}

fn binned_rows(b: &BinnedErrorStats) -> Vec<Vec<String>> {
    b.bins
        .iter()
        .map(|x| {
            vec![
                b.metric.clone(),
                format_sig6(x.lo),
                opt(x.hi),
                opt(x.mae),
                opt(x.std),
                x.count.to_string(),
                format_sig6(x.proportion),
            ]
        })
        .collect()
}

const BINNED_HEADER: [&str; 7] = [
    "metric",
    "bin_lo",
    "bin_hi",
    "MAE_m",
    "std_m",
    "count",
    "proportion",
];

fn hist_rows(prefix: &[&str], h: &Histogram, rows: &mut Vec<Vec<String>>) {
    let row = |lo: Option<f64>, hi: Option<f64>, c: usize| {
        let mut r: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
        r.extend([opt(lo), opt(hi), c.to_string()]);
        r
    };
    for (i, &c) in h.counts.iter().enumerate() {
        rows.push(row(Some(h.edges[i]), Some(h.edges[i + 1]), c));
    }
    rows.push(row(h.edges.last().copied(), None, h.overflow));
}

fn with_note(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), IoError> {
    let mut all = vec![vec![STD_NOTE.to_string()]];
    all.push(header.iter().map(|s| s.to_string()).collect());
    all.extend(rows);
    let (head, rest) = all.split_first().expect("note row");
    write_csv(
        path,
        &head.iter().map(String::as_str).collect::<Vec<_>>(),
        rest,
    )
}

/// Writes the available reports into `dir` and returns the written paths.
pub fn write_reports(dir: &Path, rep: &Reports) -> Result<Vec<PathBuf>, IoError> {
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    if let Some(b) = &rep.rays {
        with_note(&out("fig3_rays.csv"), &BINNED_HEADER, binned_rows(b))?;
    }
    if let Some(b) = &rep.angles {
        with_note(&out("fig3_angles.csv"), &BINNED_HEADER, binned_rows(b))?;
    }
    if let Some(s) = &rep.split {
        let mut rows = Vec::new();
        for (group, rays, angles) in [
            ("low", &s.rays_low, &s.angles_low),
            ("high", &s.rays_high, &s.angles_high),
        ] {
            hist_rows(&[group, "num_rays"], rays, &mut rows);
            hist_rows(&[group, "median_angle_deg"], angles, &mut rows);
        }
        let note = format!(
            "# error threshold {} m; low = error < threshold",
            format_sig6(s.threshold)
        );
        let mut all = vec![vec![
            "group".into(),
            "metric".into(),
            "bin_lo".into(),
            "bin_hi".into(),
            "count".into(),
        ]];
        all.extend(rows);
        write_csv(&out("fig4_hist.csv"), &[note.as_str()], &all)?;
    }
    if !rep.angle_histograms.is_empty() {
        let mut rows = Vec::new();
        for h in &rep.angle_histograms {
            hist_rows(&[&h.composition, &h.level], &h.histogram, &mut rows);
        }
        write_csv(
            &out("fig6_angles.csv"),
            &["composition", "level", "bin_lo_deg", "bin_hi_deg", "count"],
            &rows,
        )?;
    }
    if let Some(e) = &rep.energy {
        let header = [&BINNED_HEADER[..], &["mean_energy"]].concat();
        let rows = binned_rows(&e.binned)
            .into_iter()
            .zip(&e.mean_energy)
            .map(|(mut r, m)| {
                r.push(opt(*m));
                r
            })
            .collect();
        with_note(&out("fig7_energy.csv"), &header, rows)?;
    }
    if let Some(t) = &rep.uq {
        let header = [
            "e_lo",
            "e_hi",
            "count",
            "merged",
            "shape",
            "scale",
            "mean_px",
            "std_px",
            "sample_mean_px",
            "sample_std_px",
        ];
        let rows = t
            .bins
            .iter()
            .zip(&rep.uq_sample_stats)
            .map(|(b, s)| {
                vec![
                    format_sig6(b.e_lo),
                    format_sig6(b.e_hi),
                    b.count.to_string(),
                    b.merged.to_string(),
                    format_sig6(b.shape),
                    format_sig6(b.scale),
                    format_sig6(b.mean_px),
                    format_sig6(b.std_px),
                    format_sig6(s.0),
                    format_sig6(s.1),
                ]
            })
            .collect();
        with_note(&out("fig8_uq.csv"), &header, rows)?;
    }
    if let Some(t) = &rep.table3 {
        let header = [
            "composition",
            "pairs",
            "points",
            "mean_vs_mvs_m",
            "std_vs_mvs_m",
            "mean_vs_ref_m",
            "std_vs_ref_m",
        ];
        let rows = t
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.composition.label().to_string(),
                    r.pairs.to_string(),
                    r.points.to_string(),
                    opt(r.vs_mvs.map(|s| s.mean)),
                    opt(r.vs_mvs.map(|s| s.std)),
                    opt(r.vs_reference.map(|s| s.mean)),
                    opt(r.vs_reference.map(|s| s.std)),
                ]
            })
            .collect();
        with_note(&out("table3.csv"), &header, rows)?;
    }
    let summary = out("report_summary.json");
    write_json(&summary, &rep.summary)?;
    Ok(written)
}
