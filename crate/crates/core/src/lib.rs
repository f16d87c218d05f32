//! Randomized regression forecasters trained for individual calibration.
//!
//! A randomized forecaster maps an input `x` and a seed `r ~ Uniform[0, 1]`
//! to a predicted CDF. This crate trains such forecasters with a blend of a
//! seed-matching calibration loss and Gaussian negative log-likelihood,
//! measures average, group and adversarial-group calibration, certifies the
//! seed-matching property from held-out data, recalibrates with isotonic
//! regression, and evaluates Bayesian decisions made from the forecasts,
//! including a credit-approval game against strategic applicants.
//!
//! Module map:
//!
//! - [`math`]: normal distribution kernels, Wasserstein-1 to uniform, PAV.
//! - [`nn`]: a small feed-forward network with exact reverse-mode gradients and Adam.
//! - [`forecast`]: predicted CDFs and the forecaster variants.
//! - [`training`]: losses, training loop, concentration certificate.
//! - [`calibration`]: evaluation stack and isotonic recalibration.
//! - [`decision`]: Bayesian decisions, Markov-type checks, credit game.
//! - [`data`]: synthetic generators, CSV ingestion, splits, standardization.

pub mod calibration;
pub mod data;
pub mod decision;
mod error;
pub mod forecast;
pub mod math;
pub mod nn;
pub mod seeds;
pub mod training;

pub use error::{Error, Result};
