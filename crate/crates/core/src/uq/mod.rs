//! Reprojection-error models conditioned on DIM energy.

mod gamma;
mod samples;
mod table;

pub use gamma::{digamma, fit_gamma, trigamma, GammaFit};
pub use samples::{collect_samples, reprojection_error, select_pseudo_gt, ReprojectionSample};
pub use table::{
    annotate_cloud, build_uq_table, infer_error, GammaModel, Inference, UqParams, UqTable,
};

use thiserror::Error;

use crate::geom::GeomError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UqError {
    #[error("no samples")]
    NoSamples,
    #[error("samples have (near) zero variance; no finite fit exists")]
    DegenerateSamples,
    #[error("invalid sample value {0}")]
    InvalidSample(f64),
    #[error("uncertainty table is empty")]
    EmptyTable,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}
