//! Simulation and reconstruction for dense one-bit threshold image sensors.
//!
//! Every numeric routine is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the file
//! formats, the CLI and the experiment drivers use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod formation;
pub mod image;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod mlnet;
pub mod scalar;
pub mod scene;
pub mod solvers;
pub mod synthesis;

pub use error::{Error, Result};
pub use formation::{BinaryFrameStack, SensingOperator, ThresholdPattern};
pub use image::ExposureImage;
pub use likelihood::Observations;
pub use scalar::Real;

pub type Exposure64 = image::ExposureImage<f64>;
pub type Exposure32 = image::ExposureImage<f32>;
pub type Operator64 = formation::SensingOperator<f64>;
pub type Operator32 = formation::SensingOperator<f32>;
pub type Dictionary64 = synthesis::Dictionary<f64>;
pub type Dictionary32 = synthesis::Dictionary<f32>;
pub type Transform64 = synthesis::IntensityTransform<f64>;
pub type SolverConfig64 = solvers::SolverConfig<f64>;
pub type SolverReport64 = solvers::SolverReport<f64>;
pub type MlNet64 = mlnet::MlNetParams<f64>;
pub type MlNet32 = mlnet::MlNetParams<f32>;
