//! Core algorithms for action-conditioned human trajectory prediction and
//! joint trajectory/action forecasting.
//!
//! The crate is `no_std` (with `alloc`). Everything that touches files,
//! threads or the command line lives in the companion `trajact` crate.
//!
//! - [`vocab`] and [`data`]: label vocabularies, states, trajectories and tracklets.
//! - [`preprocess`]: resampling, velocity derivation, segmentation and fold assignment.
//! - [`stats`]: action distribution and per-action kinematic profiles.
//! - [`numerics`]: dense tensors, a reverse-mode tape, layers and Adam.
//! - [`model`]: the transformer-encoder predictors and their variants.
//! - [`train`]: losses, metrics, training loop and cross-validation.
//! - [`synth`]: seeded synthetic trajectories with closed-form futures.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod preprocess;
pub mod stats;
pub mod synth;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};

/// Sampling period of every resampled trajectory, in seconds.
pub const DT: f64 = 0.4;
/// Number of observed steps in a tracklet.
pub const OBS_LEN: usize = 8;
/// Number of predicted steps in a tracklet.
pub const PRED_LEN: usize = 12;
/// Total tracklet length.
pub const TRACKLET_LEN: usize = OBS_LEN + PRED_LEN;
