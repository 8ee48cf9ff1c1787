//! Unbiased Monte Carlo estimation of SDE transition densities through
//! probabilistic parametrix representations.
//!
//! The numerical core is generic over the floating point type (`f32` or `f64`);
//! the aliases at the crate root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod catalog;
pub mod error;
pub mod estimator;
pub mod forward;
pub mod kernels;
pub mod levy;
pub mod model;
pub mod oracles;
pub mod poisson;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use estimator::{
    run_estimator, sample_rng, EstimatorOptions, EstimatorResult, RunConfig, SampleInfo, SampleRng,
};
pub use kernels::{beta_coefficient, gauss_density, hermite1, hermite2};
pub use scalar::Scalar;

/// Model over `f64`.
pub type Model = model::DiffusionModel<f64>;
/// Positive definite matrix over `f64`.
pub type Matrix = kernels::SpdMatrix<f64>;
/// Poisson time grid over `f64`.
pub type Grid = poisson::PoissonGrid<f64>;
