//! Crowd counting by density-map regression with a hard-example-focusing loss,
//! multi-scale semantic refinement, and an auxiliary count classifier.
//!
//! All math is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! it to `f64`, which is what training and the file formats use.

pub mod error;
pub mod groundtruth;
pub mod harness;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = numerics::Tensor4<f64>;
pub type Density = groundtruth::DensityMap<f64>;
pub type Bundle = groundtruth::GroundTruthBundle<f64>;
pub type Params = model::ModelParams<f64>;
pub type Outputs = model::ModelOutputs<f64>;
pub type Sample = trainer::TrainSample<f64>;
pub type Adam = trainer::AdamState<f64>;
