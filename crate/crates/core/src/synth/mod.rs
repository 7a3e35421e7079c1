//! Procedural height-field scenes with textured surfaces and aerial camera
//! blocks, used for end-to-end checks against known geometry.

mod noise;
mod render;
mod scene;

pub use noise::ValueNoise;
pub use render::{reference_cloud, render_view};
pub use scene::{generate_scene, CameraRigSpec, Hill, SceneSpec, SurfaceSpec, SyntheticScene};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("view {0} does not see the surface")]
    NoIntersection(u32),
}
