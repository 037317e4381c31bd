//! Bayesian function optimization driven by posterior Gaussian derivative processes.
//!
//! Given an objective with analytic gradient and Hessian, the library represents the
//! objective as a Gaussian process, derives the closed-form Student-t posterior of its
//! derivative process at any query point, and samples the posterior of stationary
//! points under derivative constraints with transformation-based MCMC (TMCMC). Staged
//! importance resampling with data augmentation then sharpens the stationary-point
//! candidates toward the true optima, while a recursive Dirichlet-process posterior
//! tracks the number of local optima.
//!
//! The high-level entry point is [`optimizer::run`], which executes the full staged
//! procedure for one [`objectives::Objective`] and one [`constraints::RegionSpec`].
//! Lower-level pieces (the derivative posterior in [`gp`], the samplers in [`tmcmc`])
//! are public so they can be driven directly.
//!
//! With the `parallel` feature (on by default) the per-particle reweighting step runs
//! on a rayon thread pool; results are written by particle index, so output is
//! bit-identical to the sequential path for any worker count.

// validation sites use `!(x > 0.0)` so that NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod counting;
pub mod error;
pub mod exec;
pub mod gp;
pub mod kernel;
pub mod objectives;
pub mod optimizer;
pub mod tmcmc;

pub use error::{Error, Result};
