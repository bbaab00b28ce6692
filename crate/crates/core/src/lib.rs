//! Spot-weld quality inspection from pulsed laser thermography.
//!
//! The pipeline has five stages, each in its own module:
//!
//! * [`thermal`] renders labeled synthetic thermal films from an image-source
//!   solution of the heat diffusion equation, including emissivity, ambient
//!   offset, detector noise and ADC quantization.
//! * [`preprocess`] computes intensity curves, removes emissivity and ambient
//!   radiation by normalizing radiant-flux differences, and maps normalized
//!   frames to RGB.
//! * [`dataprep`] selects frames by index and intensity band, augments images
//!   and splits films into train/val/test sets.
//! * [`classifier`] is a small convolutional network trained with SGD.
//! * [`eval`] computes error rates, average precision and confusion matrices
//!   and runs filter/augmentation ablations.
//!
//! [`io`] and [`config`] hold the on-disk formats shared with the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod config;
pub mod dataprep;
pub mod error;
pub mod eval;
pub mod io;
pub mod preprocess;
pub mod seed;
pub mod thermal;

mod quality;

pub use error::{Error, Result};
pub use quality::QualityClass;
