//! Boundary distance loss for split-region volumetric segmentation.
//!
//! The crate provides the loss (a detector built from the spatial gradients
//! of two class-probability channels, weighted against the distance map of
//! the ground-truth split boundary), exact Euclidean distance transforms,
//! cross-entropy and soft Dice with analytic gradients, segmentation
//! metrics, a synthetic phantom generator and a small two-stage experiment
//! harness built on per-voxel linear models.

pub mod boundary;
#[cfg(feature = "cli")]
pub mod cli;
pub mod edt;
pub mod error;
pub mod fields;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
