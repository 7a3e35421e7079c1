//! Stage orchestration: synth -> match -> fuse -> evaluate -> fit-uq ->
//! report, each stage reading and writing a run directory.

mod process;
mod report;
mod stages;

pub use process::{
    evaluate_cloud, fit_and_annotate, fuse_scene, match_views, stereo_clouds, view_kinds,
    Evaluation, FusedScene, MatchedScene, UqOutput,
};
pub use report::{
    build_reports, write_reports, AngleHistogram, EnergyTrend, ReferenceContext, ReportSummary,
    Reports,
};
pub use stages::{
    evaluate_stage, fit_uq_stage, fuse_stage, infer_stage, load_matched, match_stage, report_stage,
    run_pipeline, synth_stage, Artifacts, PipelineInput,
};

use thiserror::Error;

use crate::eval::EvalError;
use crate::fusion::FusionError;
use crate::io::IoError;
use crate::synth::SynthError;
use crate::uq::UqError;

/// File names inside a run directory.
pub mod layout {
    pub const MANIFEST: &str = "manifest.json";
    pub const IMAGES: &str = "images";
    pub const PAIRS: &str = "pairs.json";
    pub const PAIR_DIR: &str = "pairs";
    pub const DEPTH_DIR: &str = "depth";
    pub const CLOUD: &str = "cloud.ply";
    pub const CLOUD_EVAL: &str = "cloud_eval.ply";
    pub const EVALUATION: &str = "evaluation.json";
    pub const UQ_TABLE: &str = "uq.json";
    pub const UQ_SAMPLES: &str = "uq_samples.csv";
    pub const CLOUD_ANNOTATED: &str = "cloud_annotated.ply";
    pub const REFERENCE: &str = "reference.ply";
    pub const SCENE: &str = "scene.json";

    pub fn config(stage: &str) -> String {
        format!("config_{stage}.json")
    }

    pub fn provenance(stage: &str) -> String {
        format!("provenance_{stage}.json")
    }
}

/// Failure inside a stage's computation.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("writing outputs: {0}")]
    Io(#[from] IoError),
    #[error("unknown image id {0}")]
    UnknownImage(u32),
    #[error("{0}")]
    Mismatch(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Unreadable or malformed user input.
    #[error("input error: {0}")]
    Input(#[source] IoError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: StageError,
    },
}

impl PipelineError {
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(StageError) -> Self {
        move |source| Self::Stage { stage, source }
    }

    pub(crate) fn stage_io(stage: &'static str) -> impl FnOnce(IoError) -> Self {
        move |e| Self::Stage {
            stage,
            source: StageError::Io(e),
        }
    }
}
