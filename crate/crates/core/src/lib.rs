//! Group-testing Bayesian optimization.
//!
//! A black-box function on `[0, 1]^D` is first probed with group tests that
//! perturb subsets of coordinates away from a default point. A particle
//! posterior over which coordinates are active drives the choice of the next
//! most informative groups. The resulting activity estimate then shapes the
//! lengthscale priors of a Gaussian-process surrogate used for Bayesian
//! optimization over the remaining budget.

// `!(x > 0.0)` is the deliberate NaN-rejecting form in validation code.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiment;
pub mod group;
pub mod information;
mod lbfgs;
pub mod objective;
pub mod optimizer;
pub mod particles;
pub mod selection;
pub mod surrogate;
pub mod variance;

pub use engine::{GtConfig, GtResult, GtRunError, TestRecord};
pub use error::{GtboError, ObjectiveError, Result};
pub use group::Group;
pub use objective::{BaseFunction, BenchmarkSpec, Objective, Point};
pub use particles::ParticleSet;
pub use variance::NoiseModel;
