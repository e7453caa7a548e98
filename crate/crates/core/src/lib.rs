//! Differentially private inexact ADMM with multiple local updates, for
//! federated multiclass logistic regression.
//!
//! Agents hold private shards and repeatedly solve a linearized, proximal
//! local subproblem whose objective is perturbed by Laplace noise calibrated
//! to the per-sample gradient sensitivity. The server only averages.
//!
//! * [`model`]: loss, gradient, sensitivity.
//! * [`mechanisms`]: Laplace and Gaussian noise with reproducible streams.
//! * [`optimizer`]: schedules, closed-form steps, the round machine.
//! * [`analysis`]: bound constants, toy problems, privacy oracles.
//! * [`data`]: IDX and writer-keyed JSON loaders, partitioning.
//! * [`harness`]: configs, metrics, multi-seed runs and aggregation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod mechanisms;
pub mod model;
pub mod optimizer;

pub use error::{Error, Result};
pub use matrix::ParamMatrix;
