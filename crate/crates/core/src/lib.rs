//! Compositional autoencoder for grouped spectra.
//!
//! Plants of one genotype grown across several environments are encoded
//! together; a fusion layer splits their joint code into genotype,
//! macro-environment and micro-environment parts, and each plant is decoded
//! from its own recombination of those parts. The crate also carries the
//! vanilla autoencoder and PCA baselines, an L-BFGS trainer, factor-specific
//! reconstruction analysis and a trait-prediction harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dataio;
pub mod downstream;
pub mod error;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod optim;

pub use error::{Error, Result};
pub use numcore::Matrix;
