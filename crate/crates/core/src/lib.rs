//! Output-feedback stochastic control barrier functions: Kalman-predictor
//! safety filters with Jensen-corrected constraints, finite-horizon safety
//! certificates and a seeded Monte Carlo simulator to check them.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod filter;
pub mod kalman;
pub mod linalg;
pub mod lqr;
pub mod montecarlo;
pub mod rng;
pub mod stats;
pub mod system;

pub use error::{Error, Result};
