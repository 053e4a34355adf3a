//! Prestack seismic facies recognition.
//!
//! Learns features from windowed prestack gathers with a denoising
//! convolutional autoencoder, clusters them into a facies map, and ships
//! PCA / poststack comparison pipelines plus a labeled synthetic-survey
//! generator for quantitative checks.
//!
//! The crate is pure Rust with hand-derived gradients; every random choice
//! is driven by an explicit seed so runs replay byte-for-byte.

pub mod baselines;
pub mod cae;
pub mod clustering;
pub mod config;
pub mod error;
pub mod features;
pub mod formats;
pub mod gradcheck;
pub mod matrix;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
