//! In-memory stages; the directory workflow wraps these.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StageError;
use crate::config::{EvalConfig, PipelineConfig};
use crate::eval::{icp_register, per_point_error, KdTree, RigidTransform, StereoCloud};
use crate::fusion::{
    fuse_image, match_pair, merge_clouds, pair_depth_map, select_neighbors, DepthMap, NeighborSet,
    PairDepthMap, PairMatch, PairRejection, PointCloud,
};
use crate::geom::{classify_view, CameraView, PairComposition, ViewKind};
use crate::uq::{
    annotate_cloud, build_uq_table, collect_samples, select_pseudo_gt, ReprojectionSample, UqTable,
};

/// Output of the matching stage.
#[derive(Clone, Debug)]
pub struct MatchedScene {
    pub views: Vec<CameraView<f64>>,
    pub neighbor_sets: Vec<NeighborSet>,
    /// Successful pairs in (base, neighbour rank) order.
    pub matches: Vec<PairMatch>,
    pub rejections: Vec<PairRejection>,
}

impl MatchedScene {
    pub fn view(&self, id: u32) -> Option<&CameraView<f64>> {
        self.views.iter().find(|v| v.image_id == id)
    }
}

/// Selects neighbours for every view and matches each (base, neighbour)
/// pair. Pairs run in parallel; results keep a fixed order.
pub fn match_views(
    views: Vec<CameraView<f64>>,
    cfg: &PipelineConfig,
) -> Result<MatchedScene, StageError> {
    let f = &cfg.fusion;
    let neighbor_sets = views
        .iter()
        .map(|v| select_neighbors(&views, v.image_id, f.n_neighbors, f.k_consistency))
        .collect::<Result<Vec<_>, _>>()?;
    let by_id: HashMap<u32, &CameraView<f64>> = views.iter().map(|v| (v.image_id, v)).collect();
    let jobs: Vec<(u32, u32)> = neighbor_sets
        .iter()
        .flat_map(|s| s.neighbor_ids.iter().map(move |&n| (s.base_id, n)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(b, n)| match_pair(by_id[&b], by_id[&n], &cfg.sgm, f.d_range_margin))
        .collect();
    let mut matches = Vec::new();
    let mut rejections = Vec::new();
    for (&(b, n), r) in jobs.iter().zip(results) {
        match r {
            Ok(m) => matches.push(m),
            Err(e) => {
                log::warn!("pair {b} -> {n} rejected: {e}");
                rejections.push(PairRejection {
                    base_id: b,
                    neighbor_id: n,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(MatchedScene {
        views,
        neighbor_sets,
        matches,
        rejections,
    })
}

/// Output of the fusion stage.
#[derive(Clone, Debug)]
pub struct FusedScene {
    pub pair_maps: Vec<PairDepthMap>,
    pub depth_maps: Vec<DepthMap>,
    pub cloud: PointCloud,
}

/// Resamples every pair onto its base image, fuses each base image and
/// merges the per-image clouds. Only the first `n_neighbors` neighbours of
/// each base are used.
pub fn fuse_scene(scene: &MatchedScene, cfg: &PipelineConfig) -> Result<FusedScene, StageError> {
    let mut rank: HashMap<(u32, u32), usize> = HashMap::new();
    for s in &scene.neighbor_sets {
        for (i, &n) in s.neighbor_ids.iter().enumerate() {
            rank.insert((s.base_id, n), i);
        }
    }
    let used: Vec<&PairMatch> = scene
        .matches
        .iter()
        .filter(|m| {
            rank.get(&(m.pair.left_id, m.pair.right_id))
                .is_some_and(|&r| r < cfg.fusion.n_neighbors)
        })
        .collect();
    let pair_maps: Vec<PairDepthMap> = used
        .par_iter()
        .map(|m| {
            let base = scene
                .view(m.pair.left_id)
                .ok_or(StageError::UnknownImage(m.pair.left_id))?;
            let nb = scene
                .view(m.pair.right_id)
                .ok_or(StageError::UnknownImage(m.pair.right_id))?;
            Ok(pair_depth_map(base, nb, m))
        })
        .collect::<Result<_, StageError>>()?;
    let per_image: Vec<(DepthMap, PointCloud)> = scene
        .views
        .par_iter()
        .map(|v| {
            let maps: Vec<PairDepthMap> = pair_maps
                .iter()
                .filter(|m| m.base_id == v.image_id)
                .cloned()
                .collect();
            let (depth, points) = fuse_image(v, &maps, &cfg.fusion)?;
            Ok((depth, PointCloud::new(points)))
        })
        .collect::<Result<_, StageError>>()?;
    let (depth_maps, clouds): (Vec<_>, Vec<_>) = per_image.into_iter().unzip();
    let cloud = merge_clouds(clouds)?;
    Ok(FusedScene {
        pair_maps,
        depth_maps,
        cloud,
    })
}

/// Registration and error summary of an evaluated cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Row-major rotation applied to the cloud.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub icp_rms: Option<f64>,
    pub icp_iterations: usize,
    pub icp_converged: bool,
    pub evaluated: usize,
    /// Points outside the reference's horizontal extent.
    pub excluded: usize,
    pub mae_m: Option<f64>,
    /// Population standard deviation.
    pub std_m: Option<f64>,
}

impl Evaluation {
    pub fn transform(&self) -> RigidTransform<f64> {
        RigidTransform {
            rotation: nalgebra::Matrix3::from_row_slice(&self.rotation),
            translation: Vector3::from(self.translation),
        }
    }
}

/// Registers `cloud` to `reference` (optionally), then stores the nearest
/// reference distance of every point inside the reference's horizontal
/// extent in `error_m`. Points outside get `None`.
pub fn evaluate_cloud(
    cloud: &PointCloud,
    reference: &PointCloud,
    cfg: &EvalConfig,
) -> Result<(PointCloud, Evaluation), StageError> {
    let bbox = reference
        .bounding_box()
        .ok_or(StageError::Eval(crate::eval::EvalError::EmptyReference))?;
    let m = cfg.crop_margin;
    let inside = |p: &Vector3<f64>| {
        p.x >= bbox.min.x - m
            && p.x <= bbox.max.x + m
            && p.y >= bbox.min.y - m
            && p.y <= bbox.max.y + m
    };
    let tree = KdTree::new(reference.positions());
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| inside(&cloud.points[i].position))
        .collect();
    let source: Vec<Vector3<f64>> = keep.iter().map(|&i| cloud.points[i].position).collect();
    let (transform, rms, iterations, converged) = if cfg.icp && !source.is_empty() {
        let r = icp_register(&source, &tree, &cfg.icp_params)?;
        (r.transform, Some(r.rms), r.iterations, r.converged)
    } else {
        (RigidTransform::identity(), None, 0, false)
    };
    let mut out = cloud.clone();
    for p in &mut out.points {
        p.position = transform.apply(&p.position);
        p.error_m = None;
    }
    let moved: Vec<Vector3<f64>> = keep.iter().map(|&i| out.points[i].position).collect();
    let errors = per_point_error(&moved, &tree)?;
    for (&i, &e) in keep.iter().zip(&errors) {
        out.points[i].error_m = Some(e as f32);
    }
    let stats = crate::eval::error_stats(&errors);
    let r = transform.rotation;
    Ok((
        out,
        Evaluation {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: transform.translation.into(),
            icp_rms: rms,
            icp_iterations: iterations,
            icp_converged: converged,
            evaluated: keep.len(),
            excluded: cloud.len() - keep.len(),
            mae_m: stats.map(|s| s.mean),
            std_m: stats.map(|s| s.std),
        },
    ))
}

/// Output of the uncertainty stage.
#[derive(Clone, Debug)]
pub struct UqOutput {
    pub pseudo_gt: Vec<usize>,
    pub samples: Vec<ReprojectionSample>,
    pub table: UqTable,
    /// Points without a usable pair energy.
    pub unannotated: usize,
}

/// Fits the energy-conditioned error table from multi-ray points and
/// annotates `cloud` (which must be `fused.cloud` or a copy in the same
/// order, e.g. an evaluated one).
pub fn fit_and_annotate(
    scene: &MatchedScene,
    fused: &FusedScene,
    cloud: &mut PointCloud,
    cfg: &PipelineConfig,
) -> Result<UqOutput, StageError> {
    let points = &fused.cloud.points;
    let pseudo_gt = select_pseudo_gt(points, &scene.views, cfg.uq.min_rays)?;
    let samples = collect_samples(points, &pseudo_gt, &scene.views, &fused.pair_maps);
    let table = build_uq_table(&samples, cfg.uq.bin_size, cfg.uq.min_samples)?;
    if cloud.len() != points.len() {
        return Err(StageError::Mismatch(format!(
            "cloud has {} points, fusion produced {}",
            cloud.len(),
            points.len()
        )));
    }
    for (dst, src) in cloud.points.iter_mut().zip(points) {
        if dst.pair_energies.is_empty() {
            dst.pair_energies = src.pair_energies.clone();
            dst.contributing_pair_ids = src.contributing_pair_ids.clone();
        }
    }
    let unannotated = annotate_cloud(&mut cloud.points, &table)?;
    Ok(UqOutput {
        pseudo_gt,
        samples,
        table,
        unannotated,
    })
}

/// Nadir/oblique label of every view.
pub fn view_kinds(views: &[CameraView<f64>], cfg: &PipelineConfig) -> HashMap<u32, ViewKind> {
    let down = Vector3::from(cfg.down).normalize();
    views
        .iter()
        .map(|v| {
            (
                v.image_id,
                classify_view(v, cfg.tilt_threshold_deg, &down).kind,
            )
        })
        .collect()
}

/// Per-pair triangulated clouds labelled by composition.
pub fn stereo_clouds(
    scene: &MatchedScene,
    fused: &FusedScene,
    cfg: &PipelineConfig,
) -> Vec<StereoCloud> {
    let kinds = view_kinds(&scene.views, cfg);
    fused
        .pair_maps
        .par_iter()
        .filter_map(|m| {
            let base = scene.view(m.base_id)?;
            let c = PairComposition::of(kinds[&m.base_id], kinds[&m.neighbor_id]);
            Some(StereoCloud::from_depth_map(base, m, c))
        })
        .collect()
}
