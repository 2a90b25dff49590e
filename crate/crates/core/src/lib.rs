//! Automated selection of adaptive generalized additive models.
//!
//! A model is a formula (an ordered list of additive effects, each built from
//! engineered covariates and a spline/indicator basis) optionally paired with
//! the diagonal of a state-space noise matrix that lets the effect weights
//! drift over time. The crate covers the whole loop:
//!
//! * [`formula`]: the search genome, its validation and its text/JSON forms;
//! * [`features`]: exponential smoothing, category selection, lags and
//!   calendar covariates;
//! * [`basis`]: P-spline, cyclic, indicator and tensor-product design blocks;
//! * [`fit`]: penalized least squares with GCV smoothing selection and
//!   effective degrees of freedom;
//! * [`adapt`]: Kalman recursions over effect weights and the iterative grid
//!   search over the noise diagonal;
//! * [`search`]: the loss, random model generation, mutation/crossover and the
//!   steady-state evolutionary algorithm;
//! * [`data`]: datasets, splits, synthetic generators, metrics and the weekly
//!   delayed-data replay;
//! * [`presets`]: built-in reference formulae.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod basis;
pub mod data;
mod error;
pub mod features;
pub mod fit;
pub mod formula;
pub mod linalg;
pub mod presets;
pub mod search;

pub use error::{Error, Result};
