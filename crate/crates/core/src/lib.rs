//! Sparse variational Gaussian processes with a neural-network mean
//! function, plus the exact-GP and neural-network baselines and the data and
//! evaluation plumbing around them.
//!
//! The numerical core is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`, which is what training and evaluation use.

pub mod baselines;
pub mod config;
pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exact_gp;
pub mod fit;
pub mod kernels;
pub mod linalg;
pub mod mean;
pub mod pipeline;
pub mod predictive;
pub mod scalar;
pub mod svgp;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Svgp = svgp::SvgpModel<f64>;
pub type ExactGp = exact_gp::ExactGpModel<f64>;
pub type Mlp = mean::Mlp<f64>;
pub type MeanFunction = mean::MeanFunction<f64>;
pub type Kernel = kernels::KernelParams<f64>;
pub type Data = dataset::Dataset<f64>;
pub type Predictive = predictive::PredictiveDist<f64>;
pub type NnRegressor = baselines::NnRegressor<f64>;
