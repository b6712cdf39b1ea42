//! Bayesian online one-pass estimation for generalized linear models, with
//! SGD-family baselines, interval construction, simulation designs and
//! numerical checks of the supporting inequalities.

// `!(a >= b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod batch;
pub mod datagen;
pub mod error;
pub mod glm;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod posterior;
pub mod theory;

pub use error::{BooError, Result};
pub use glm::{LinkFunction, Observation};
pub use posterior::{default_t0, BooConfig, BooEstimator, GaussianPosterior};
