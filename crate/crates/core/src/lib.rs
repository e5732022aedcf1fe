//! Categorical (histogram) energy regression for machine-learned
//! interatomic potentials.
//!
//! Scalar per-atom energies are encoded as Gaussian-smoothed histograms
//! ([`codec`]), a small network is trained against them with cross-entropy
//! ([`loss`], [`model`]), predictions are decoded by expectation, and the
//! entropy of the predicted distribution serves as an uncertainty signal
//! ([`experiment`]). A Lennard-Jones cluster generator ([`toy`]) supplies
//! labeled data.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod codec;
pub mod config;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod model;
pub mod objective;
pub mod toy;

pub use error::{Error, Result};
