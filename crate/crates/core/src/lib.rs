//! Stochastic interpolant action policies with difficulty-aware inference
//! budgets.
//!
//! A single field network (velocity, score or noise head) trained on one
//! interpolant path supports both probability-flow ODE and marginal-preserving
//! SDE sampling. At run time a difficulty estimate per control cycle picks the
//! step count, solver and integration mode.

pub mod difficulty;
pub mod envs;
pub mod error;
pub mod field;
pub mod interpolant;
pub mod nn;
pub mod par;
pub mod runtime;
pub mod sampler;

pub use error::{Error, ErrorCategory, Result};
