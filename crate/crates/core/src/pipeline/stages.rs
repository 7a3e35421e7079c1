use std::path::{Path, PathBuf};

use log::info;
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layout::{self, config as config_file, provenance as provenance_file};
use super::process::{
    evaluate_cloud, fit_and_annotate, fuse_scene, match_views, stereo_clouds, Evaluation,
    MatchedScene,
};
use super::report::{build_reports, write_reports, ReferenceContext};
use super::PipelineError;
use crate::config::PipelineConfig;
use crate::fusion::{NeighborSet, PairMatch, PairRejection, PointCloud};
use crate::geom::{rectify_pair, CameraView, ViewKind};
use crate::io::{
    format_sig6, load_manifest, load_ply, read_json, save_ply, save_png, write_csv, write_json,
    write_manifest, Dmap, IoError, Manifest, ManifestView, Provenance,
};
use crate::synth::{generate_scene, reference_cloud, render_view, SceneSpec};
use crate::uq::{annotate_cloud, collect_samples, select_pseudo_gt, UqTable};

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PairEntry {
    base_id: u32,
    neighbor_id: u32,
    file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RejectionEntry {
    base_id: u32,
    neighbor_id: u32,
    reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PairsFile {
    neighbor_sets: Vec<NeighborSet>,
    pairs: Vec<PairEntry>,
    rejections: Vec<RejectionEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SceneFile {
    seed: u64,
    spec: SceneSpec,
    reference_bounds: [f64; 4],
    reference_pitch: f64,
}

fn input(e: IoError) -> PipelineError {
    PipelineError::Input(e)
}

fn finish(
    stage: &'static str,
    dir: &Path,
    cfg: &PipelineConfig,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<()> {
    let json = cfg.to_json();
    let cfg_path = dir.join(config_file(stage));
    std::fs::write(&cfg_path, format!("{json}\n"))
        .map_err(|source| IoError::File {
            path: cfg_path.display().to_string(),
            source,
        })
        .map_err(PipelineError::stage_io(stage))?;
    let mut p = Provenance::new(stage, &json);
    for f in inputs {
        p.add_input(dir, f)
            .map_err(PipelineError::stage_io(stage))?;
    }
    for f in outputs.iter().chain(std::iter::once(&cfg_path)) {
        p.add_output(dir, f)
            .map_err(PipelineError::stage_io(stage))?;
    }
    write_json(&dir.join(provenance_file(stage)), &p).map_err(PipelineError::stage_io(stage))
}

fn check(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate().map_err(PipelineError::Config)
}

/// Ground rectangle seen by the nadir views (all views when there are none).
fn reference_bounds(
    views: &[CameraView<f64>],
    kinds: &[ViewKind],
    scene: &crate::synth::SyntheticScene,
) -> [f64; 4] {
    let any_nadir = kinds.contains(&ViewKind::Nadir);
    let mut b = [
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    ];
    for (v, k) in views.iter().zip(kinds) {
        if any_nadir && *k != ViewKind::Nadir {
            continue;
        }
        let (w, h) = ((v.width - 1) as f64, (v.height - 1) as f64);
        for (x, y) in [
            (0.0, 0.0),
            (w, 0.0),
            (0.0, h),
            (w, h),
            (w / 2.0, 0.0),
            (w / 2.0, h),
            (0.0, h / 2.0),
            (w, h / 2.0),
        ] {
            let ray = v.pixel_ray(&Vector2::new(x, y));
            if let Some(t) = scene.intersect(&v.center, &ray) {
                let p = v.center + ray * t;
                b = [b[0].min(p.x), b[1].max(p.x), b[2].min(p.y), b[3].max(p.y)];
            }
        }
    }
    if b[0] > b[1] {
        let f = scene.spec.footprint_half;
        return [-f, f, -f, f];
    }
    b
}

/// Generates a synthetic scene into `out`: images, manifest, reference cloud
/// and the scene description.
pub fn synth_stage(
    seed: u64,
    spec: &SceneSpec,
    out: &Path,
    cfg: &PipelineConfig,
) -> Result<PathBuf> {
    const STAGE: &str = "synth";
    check(cfg)?;
    let scene = generate_scene(seed, spec).map_err(|e| PipelineError::stage(STAGE)(e.into()))?;
    let rendered = scene
        .views
        .par_iter()
        .map(|v| render_view(&scene, v))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::stage(STAGE)(e.into()))?;
    let io = PipelineError::stage_io(STAGE);
    let mut outputs = Vec::new();
    let mut views = Vec::new();
    for (v, (raster, _)) in scene.views.iter().zip(&rendered) {
        let rel = format!("{}/{:04}.png", layout::IMAGES, v.image_id);
        let path = out.join(&rel);
        save_png(&path, raster).map_err(PipelineError::stage_io(STAGE))?;
        outputs.push(path);
        views.push(ManifestView::from_view(v, rel.into()));
    }
    let manifest_path = out.join(layout::MANIFEST);
    write_manifest(&manifest_path, &Manifest { views }).map_err(PipelineError::stage_io(STAGE))?;
    outputs.push(manifest_path.clone());
    let kinds: Vec<ViewKind> = {
        let k = super::view_kinds(&scene.views, cfg);
        scene.views.iter().map(|v| k[&v.image_id]).collect()
    };
    let bounds = reference_bounds(&scene.views, &kinds, &scene);
    let reference = reference_cloud(&scene, bounds, cfg.reference_pitch);
    let ref_path = out.join(layout::REFERENCE);
    save_ply(&ref_path, &reference).map_err(PipelineError::stage_io(STAGE))?;
    outputs.push(ref_path);
    let scene_path = out.join(layout::SCENE);
    let file = SceneFile {
        seed,
        spec: spec.clone(),
        reference_bounds: bounds,
        reference_pitch: cfg.reference_pitch,
    };
    write_json(&scene_path, &file).map_err(io)?;
    outputs.push(scene_path);
    finish(STAGE, out, cfg, &[], &outputs)?;
    info!(
        "synthesised {} views, {} reference points",
        scene.views.len(),
        reference.len()
    );
    Ok(manifest_path)
}

/// Matches every view of a manifest against its neighbours. Images are
/// copied into the run directory so later stages only need `out`.
pub fn match_stage(manifest_path: &Path, out: &Path, cfg: &PipelineConfig) -> Result<MatchedScene> {
    const STAGE: &str = "match";
    check(cfg)?;
    let (manifest, views) = load_manifest(manifest_path).map_err(input)?;
    let src_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let io = PipelineError::stage_io;
    let mut outputs = Vec::new();
    let mut copied = Vec::new();
    for mv in &manifest.views {
        let ext = mv
            .image_path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("png");
        let rel = format!("{}/{:04}.{ext}", layout::IMAGES, mv.image_id);
        let dst = out.join(&rel);
        let src = src_dir.join(&mv.image_path);
        if src.canonicalize().ok() != dst.canonicalize().ok() {
            std::fs::create_dir_all(dst.parent().expect("has parent"))
                .and_then(|_| std::fs::copy(&src, &dst))
                .map_err(|source| IoError::File {
                    path: dst.display().to_string(),
                    source,
                })
                .map_err(io(STAGE))?;
        }
        outputs.push(dst);
        copied.push(ManifestView {
            image_path: rel.into(),
            ..mv.clone()
        });
    }
    let local_manifest = out.join(layout::MANIFEST);
    write_manifest(&local_manifest, &Manifest { views: copied }).map_err(io(STAGE))?;
    outputs.push(local_manifest);

    let scene = match_views(views, cfg).map_err(PipelineError::stage(STAGE))?;
    let mut pairs = Vec::new();
    for m in &scene.matches {
        let rel = format!(
            "{}/{}_{}.dmap",
            layout::PAIR_DIR,
            m.pair.left_id,
            m.pair.right_id
        );
        let path = out.join(&rel);
        Dmap::from_disparity(&m.disparity)
            .save(&path)
            .map_err(io(STAGE))?;
        outputs.push(path);
        pairs.push(PairEntry {
            base_id: m.pair.left_id,
            neighbor_id: m.pair.right_id,
            file: rel,
        });
    }
    let pairs_path = out.join(layout::PAIRS);
    let file = PairsFile {
        neighbor_sets: scene.neighbor_sets.clone(),
        pairs,
        rejections: scene
            .rejections
            .iter()
            .map(|r| RejectionEntry {
                base_id: r.base_id,
                neighbor_id: r.neighbor_id,
                reason: r.reason.clone(),
            })
            .collect(),
    };
    write_json(&pairs_path, &file).map_err(io(STAGE))?;
    outputs.push(pairs_path);
    finish(STAGE, out, cfg, &[manifest_path.to_path_buf()], &outputs)?;
    info!(
        "matched {} pairs, rejected {}",
        scene.matches.len(),
        scene.rejections.len()
    );
    Ok(scene)
}

/// Reloads the match stage's results. Rectifications are recomputed from the
/// cameras with the margin the match stage used.
pub fn load_matched(dir: &Path) -> Result<MatchedScene> {
    let manifest: Manifest = read_json(&dir.join(layout::MANIFEST)).map_err(input)?;
    let views = manifest.cameras().map_err(input)?;
    let match_cfg: PipelineConfig = read_json(&dir.join(config_file("match"))).map_err(input)?;
    let file: PairsFile = read_json(&dir.join(layout::PAIRS)).map_err(input)?;
    let find = |id: u32| {
        views.iter().find(|v| v.image_id == id).ok_or_else(|| {
            input(IoError::format(
                "pairs.json",
                format!("unknown image id {id}"),
            ))
        })
    };
    let matches = file
        .pairs
        .par_iter()
        .map(|e| {
            let pair = rectify_pair(
                find(e.base_id)?,
                find(e.neighbor_id)?,
                match_cfg.fusion.d_range_margin,
            )
            .map_err(|g| {
                input(IoError::format(
                    "pairs.json",
                    format!("pair {}->{}: {g}", e.base_id, e.neighbor_id),
                ))
            })?;
            let disparity = Dmap::load(&dir.join(&e.file))
                .and_then(|d| d.to_disparity())
                .map_err(input)?;
            if disparity.width != pair.width as usize || disparity.height != pair.height as usize {
                return Err(input(IoError::format(
                    "DMAP",
                    format!("{} does not match its rectified pair", e.file),
                )));
            }
            Ok(PairMatch { pair, disparity })
        })
        .collect::<Result<Vec<_>>>()?;
    let rejections = file
        .rejections
        .into_iter()
        .map(|r| PairRejection {
            base_id: r.base_id,
            neighbor_id: r.neighbor_id,
            reason: r.reason,
        })
        .collect();
    Ok(MatchedScene {
        views,
        neighbor_sets: file.neighbor_sets,
        matches,
        rejections,
    })
}

/// Fusion parameters the fuse stage used, so later stages rebuild the same
/// cloud.
fn fuse_config(dir: &Path, cfg: &PipelineConfig) -> Result<PipelineConfig> {
    let fused: PipelineConfig = read_json(&dir.join(config_file("fuse"))).map_err(input)?;
    Ok(PipelineConfig {
        fusion: fused.fusion,
        ..cfg.clone()
    })
}

/// Fuses the matched pairs of `dir` into per-image depth maps and a cloud.
pub fn fuse_stage(dir: &Path, cfg: &PipelineConfig) -> Result<PointCloud> {
    const STAGE: &str = "fuse";
    check(cfg)?;
    let scene = load_matched(dir)?;
    let fused = fuse_scene(&scene, cfg).map_err(PipelineError::stage(STAGE))?;
    let io = PipelineError::stage_io;
    let mut outputs = Vec::new();
    for d in &fused.depth_maps {
        let path = dir.join(format!("{}/{}.dmap", layout::DEPTH_DIR, d.image_id));
        Dmap::from_depth(d).save(&path).map_err(io(STAGE))?;
        outputs.push(path);
    }
    let cloud_path = dir.join(layout::CLOUD);
    save_ply(&cloud_path, &fused.cloud).map_err(io(STAGE))?;
    outputs.push(cloud_path);
    let inputs = vec![dir.join(layout::PAIRS)];
    finish(STAGE, dir, cfg, &inputs, &outputs)?;
    info!("fused {} points", fused.cloud.len());
    Ok(fused.cloud)
}

/// Evaluates a cloud file against a reference file.
pub fn evaluate_stage(
    cloud_path: &Path,
    reference_path: &Path,
    out_cloud: &Path,
    out_json: &Path,
    cfg: &PipelineConfig,
) -> Result<Evaluation> {
    const STAGE: &str = "evaluate";
    check(cfg)?;
    let cloud = load_ply(cloud_path).map_err(input)?;
    let reference = load_ply(reference_path).map_err(input)?;
    let (evaluated, summary) =
        evaluate_cloud(&cloud, &reference, &cfg.eval).map_err(PipelineError::stage(STAGE))?;
    save_ply(out_cloud, &evaluated).map_err(PipelineError::stage_io(STAGE))?;
    write_json(out_json, &summary).map_err(PipelineError::stage_io(STAGE))?;
    let dir = out_json.parent().unwrap_or(Path::new("."));
    finish(
        STAGE,
        dir,
        cfg,
        &[cloud_path.into(), reference_path.into()],
        &[out_cloud.into(), out_json.into()],
    )?;
    info!(
        "evaluated {} points ({} outside the reference), MAE {:?} m",
        summary.evaluated, summary.excluded, summary.mae_m
    );
    Ok(summary)
}

/// The most processed cloud present in `dir`.
fn latest_cloud(dir: &Path, names: &[&str]) -> Result<(PathBuf, PointCloud)> {
    for name in names {
        let p = dir.join(name);
        if p.exists() {
            return Ok((p.clone(), load_ply(&p).map_err(input)?));
        }
    }
    Err(input(IoError::format(
        "run directory",
        format!("none of {names:?} found in {}", dir.display()),
    )))
}

/// Fits the uncertainty table from the run in `dir` and annotates its cloud
/// (the evaluated one when present).
pub fn fit_uq_stage(dir: &Path, cfg: &PipelineConfig) -> Result<UqTable> {
    const STAGE: &str = "fit_uq";
    check(cfg)?;
    let cfg = fuse_config(dir, cfg)?;
    let scene = load_matched(dir)?;
    let fused = fuse_scene(&scene, &cfg).map_err(PipelineError::stage(STAGE))?;
    let (cloud_path, mut cloud) = latest_cloud(dir, &[layout::CLOUD_EVAL, layout::CLOUD])?;
    let uq =
        fit_and_annotate(&scene, &fused, &mut cloud, &cfg).map_err(PipelineError::stage(STAGE))?;
    let io = PipelineError::stage_io;
    let table_path = dir.join(layout::UQ_TABLE);
    write_json(&table_path, &uq.table).map_err(io(STAGE))?;
    let samples_path = dir.join(layout::UQ_SAMPLES);
    let rows: Vec<Vec<String>> = uq
        .samples
        .iter()
        .map(|s| {
            vec![
                s.point_index.to_string(),
                s.base_image.to_string(),
                s.base_pixel[0].to_string(),
                s.base_pixel[1].to_string(),
                s.neighbor_id.to_string(),
                format_sig6(s.energy as f64),
                format_sig6(s.r),
            ]
        })
        .collect();
    write_csv(
        &samples_path,
        &[
            "point_index",
            "base_image",
            "col",
            "row",
            "neighbor_id",
            "dim_energy",
            "r_px",
        ],
        &rows,
    )
    .map_err(io(STAGE))?;
    let annotated_path = dir.join(layout::CLOUD_ANNOTATED);
    save_ply(&annotated_path, &cloud).map_err(io(STAGE))?;
    finish(
        STAGE,
        dir,
        &cfg,
        &[cloud_path],
        &[table_path, samples_path, annotated_path],
    )?;
    info!(
        "{} pseudo ground truth points, {} samples, {} bins",
        uq.pseudo_gt.len(),
        uq.samples.len(),
        uq.table.bins.len()
    );
    Ok(uq.table)
}

/// Annotates a cloud file from a table file. Points carry a single fused
/// energy in PLY form, which stands in for their pair energies.
pub fn infer_stage(cloud_path: &Path, table_path: &Path, out: &Path) -> Result<usize> {
    const STAGE: &str = "infer";
    let mut cloud = load_ply(cloud_path).map_err(input)?;
    let table: UqTable = read_json(table_path).map_err(input)?;
    for p in &mut cloud.points {
        if p.pair_energies.is_empty() {
            p.pair_energies = vec![p.energy];
        }
    }
    let flagged = annotate_cloud(&mut cloud.points, &table)
        .map_err(|e| PipelineError::stage(STAGE)(e.into()))?;
    save_ply(out, &cloud).map_err(PipelineError::stage_io(STAGE))?;
    Ok(flagged)
}

/// Writes every report the run in `dir` supports. The composition table
/// needs `reference`.
pub fn report_stage(
    dir: &Path,
    reference: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "report";
    check(cfg)?;
    let mut cfg = fuse_config(dir, cfg)?;
    let fit_path = dir.join(config_file("fit_uq"));
    if fit_path.exists() {
        cfg.uq = read_json::<PipelineConfig>(&fit_path).map_err(input)?.uq;
    }
    let scene = load_matched(dir)?;
    let fused = fuse_scene(&scene, &cfg).map_err(PipelineError::stage(STAGE))?;
    let (cloud_path, cloud) = latest_cloud(
        dir,
        &[layout::CLOUD_ANNOTATED, layout::CLOUD_EVAL, layout::CLOUD],
    )?;
    let stereo = stereo_clouds(&scene, &fused, &cfg);
    let center = |id: u32| scene.view(id).map_or(Vector3::zeros(), |v| v.center);
    let centers: Vec<_> = stereo
        .iter()
        .map(|s| (center(s.base_id), center(s.neighbor_id)))
        .collect();
    let eval_path = dir.join(layout::EVALUATION);
    let transform = if eval_path.exists() {
        read_json::<Evaluation>(&eval_path)
            .map_err(input)?
            .transform()
    } else {
        crate::eval::RigidTransform::identity()
    };
    let reference_cloud = reference.map(load_ply).transpose().map_err(input)?;
    let ctx = reference_cloud.as_ref().map(|r| ReferenceContext {
        reference: r,
        transform,
    });
    let table_path = dir.join(layout::UQ_TABLE);
    let table: Option<UqTable> = table_path
        .exists()
        .then(|| read_json(&table_path))
        .transpose()
        .map_err(input)?;
    let samples = match &table {
        Some(_) => {
            let sel = select_pseudo_gt(&fused.cloud.points, &scene.views, cfg.uq.min_rays)
                .map_err(|e| PipelineError::stage(STAGE)(e.into()))?;
            collect_samples(&fused.cloud.points, &sel, &scene.views, &fused.pair_maps)
        }
        None => Vec::new(),
    };
    let reports = build_reports(
        &cloud,
        &stereo,
        &centers,
        ctx,
        table.as_ref().map(|t| (t, samples.as_slice())),
        &cfg.eval,
    )
    .map_err(PipelineError::stage(STAGE))?;
    let written = write_reports(dir, &reports).map_err(PipelineError::stage_io(STAGE))?;
    let mut inputs = vec![cloud_path];
    inputs.extend(reference.map(Path::to_path_buf));
    finish(STAGE, dir, &cfg, &inputs, &written)?;
    Ok(written)
}

/// Where a run's images come from.
#[derive(Clone, Debug)]
pub enum PipelineInput {
    Manifest(PathBuf),
    Synthetic { seed: u64, spec: SceneSpec },
}

/// Summary of a full run.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub points: usize,
    pub evaluation: Option<Evaluation>,
    pub uq_bins: usize,
    pub reports: Vec<PathBuf>,
}

/// Runs every stage into `out`. Synthetic inputs are generated under
/// `out/scene` and evaluated against their own reference unless another is
/// given.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    source: &PipelineInput,
    reference: Option<&Path>,
    out: &Path,
) -> Result<Artifacts> {
    check(cfg)?;
    let (manifest, reference) = match source {
        PipelineInput::Manifest(m) => (m.clone(), reference.map(Path::to_path_buf)),
        PipelineInput::Synthetic { seed, spec } => {
            let scene_dir = out.join("scene");
            let manifest = synth_stage(*seed, spec, &scene_dir, cfg)?;
            (
                manifest,
                Some(
                    reference.map_or_else(|| scene_dir.join(layout::REFERENCE), Path::to_path_buf),
                ),
            )
        }
    };
    match_stage(&manifest, out, cfg)?;
    let cloud = fuse_stage(out, cfg)?;
    let evaluation = match &reference {
        Some(r) => Some(evaluate_stage(
            &out.join(layout::CLOUD),
            r,
            &out.join(layout::CLOUD_EVAL),
            &out.join(layout::EVALUATION),
            cfg,
        )?),
        None => None,
    };
    let table = fit_uq_stage(out, cfg)?;
    let reports = report_stage(out, reference.as_deref(), cfg)?;
    Ok(Artifacts {
        dir: out.to_path_buf(),
        points: cloud.len(),
        evaluation,
        uq_bins: table.bins.len(),
        reports,
    })
}
