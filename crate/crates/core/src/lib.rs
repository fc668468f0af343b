//! Synthetic augmentation of small tabular datasets.
//!
//! Tables are encoded as grayscale images ([`codec`]), perturbed by an
//! img2img generator at a sweep of strengths ([`generators`]), decoded back
//! into rows and then filtered: either by transfer-learning source detection
//! ([`filters::transfer`]) or by distance to the originals in a feature space
//! ([`filters::distance`], [`distances`]). [`bound_check`] verifies the
//! Wasserstein generalization bound numerically, and [`harness`] wires the
//! whole pipeline together.

pub mod bound_check;
pub mod codec;
pub mod distances;
pub mod error;
pub mod filters;
pub mod generators;
pub mod harness;
pub mod models;
pub mod rng;

pub use error::{Error, Result};
