//! Simulation and numerical analysis of the (1,λ) evolution strategy with
//! resampling on a linear function under a linear constraint.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the front end.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analysis;
pub mod constraint;
pub mod dist;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod stats;

pub use scalar::Scalar;

pub type ConstraintNormal = constraint::ConstraintNormal<f64>;
pub type Marginal1D = dist::Marginal1D<f64>;
pub type ArchimedeanGenerator = dist::ArchimedeanGenerator<f64>;
pub type Copula = dist::Copula<f64>;
pub type MovementDistribution = dist::MovementDistribution<f64>;
pub type Tolerance = quadrature::Tolerance<f64>;
pub type EsConfig = sim::EsConfig<f64>;
pub type Trace = sim::Trace<f64>;
