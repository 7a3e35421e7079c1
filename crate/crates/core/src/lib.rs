//! Depth-map-fusion multi-view stereo with per-point reliability metrics,
//! reference-cloud evaluation and energy-binned Gamma error models.
//!
//! Geometry, registration and Gamma fitting are generic over [`Real`]
//! (`f32` or `f64`); the aliases below fix the scalar to `f64`, which is what
//! the pipeline uses.

pub mod config;
pub mod eval;
pub mod fusion;
pub mod geom;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod scalar;
pub mod stereo;
pub mod synth;
pub mod uq;

pub use scalar::Real;

pub type CameraView = geom::CameraView<f64>;
pub type ViewClass = geom::ViewClass<f64>;
pub type RectifiedPair = geom::RectifiedPair<f64>;
pub type Triangulation = geom::Triangulation<f64>;
pub type KdTree = eval::KdTree<f64>;
pub type RigidTransform = eval::RigidTransform<f64>;
pub type IcpResult = eval::IcpResult<f64>;
pub type GammaFit = uq::GammaFit<f64>;
