//! Bayesian model mixing of competing simulators with sum-of-trees weight functions.
//!
//! The mixed prediction is `f̂(x)ᵀ w(x)` where each simulator's weight is a
//! sum of regression trees with vector-valued leaves, fitted by backfitting
//! MCMC. Simulator predictions for the φ⁴ examples come from weak and strong
//! coupling expansions with a truncation-error model ([`eft`]).
//!
//! Runnable examples (`cargo run --release --example <name>`):
//!
//! - `phi4_expansions`: the true system against its finite-order expansions
//! - `eft_truncation`: truncation-error fits and predictive bands
//! - `calibration_priors`: leaf and variance prior calibration
//! - `small_tree_posterior`: sampler visit frequencies against exact enumeration
//! - `mix_example1a`, `mix_example1b`: one-dimensional mixing
//! - `mix_2d`: two-dimensional mixing with a weight map
//! - `bma_baseline`: global-weight averaging on the same data

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod calibration;
pub mod config;
pub mod dataset;
pub mod eft;
pub mod error;
pub mod experiment;
pub mod node_model;
pub mod quadrature;
pub mod sampler;
pub mod trees;

pub use error::{Error, Result};
