//! Radar cross section classification of small UAVs.
//!
//! The crate synthesizes RCS signatures from scattering-center models,
//! injects SNR-calibrated noise, and classifies signatures with three
//! families of classifiers: statistical (unimodal densities and Gaussian
//! mixtures), classical machine learning on hand-crafted features, and a
//! continuous-wavelet-transform front end that renders scalogram images.

// Numeric kernels index several parallel arrays at once, and `!(x > 0.0)`
// is the intended NaN-rejecting form.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod cwt;
pub mod densities;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod hyperopt;
pub mod ml_classifiers;
pub mod noise;
pub mod seed;
pub mod signatures;
pub mod sl_classifier;

pub use error::{Error, Result};
