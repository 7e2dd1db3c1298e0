//! Survival probabilities and activation rates that make a constant-population
//! ageing process settle on a chosen age distribution.
//!
//! Agents belong to ordered age groups. Each step an agent survives with its
//! group's probability and moves up one group; every death is replaced by a
//! newcomer in the first group, so the population never changes size.
//!
//! - [`model1`] solves the plain process in closed form for monotone
//!   non-increasing targets.
//! - [`model2`] adds per-group activation rates and searches them with
//!   differential evolution, covering non-monotone targets.
//! - [`curvefit`] replaces targets neither model reproduces with the closest
//!   monotone plateau-then-decay curve.
//! - [`simulator`] runs the agent-level process to check a solution.
//! - [`pipeline`] chains the above per distribution or per dataset.

pub mod curvefit;
pub mod distributions;
pub mod error;
pub mod io;
pub mod model1;
pub mod model2;
pub mod pipeline;
pub mod simulator;

pub use distributions::{
    classify, mean_absolute_error, normalize, wasserstein, ActivationVector, AgeDistribution,
    ModelKind, ModelParams, Shape, SurvivalVector,
};
pub use error::{Error, Result};
