//! Query-image geo-localization against a GPS-tagged reference database.
//!
//! Local descriptors of the query are matched to reference descriptors by
//! extracting dominant sets from a multi-neighbor matching graph, and the
//! final reference image is chosen by a constrained dominant set anchored on
//! the query.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cds;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod image;
pub mod geo;
pub mod matching;
pub mod nn;
pub mod pipeline;
pub mod graph;
pub mod stqp;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};

/// Gaussian kernel `exp(-d^2 / 2 gamma^2)`.
#[inline]
pub fn gaussian_similarity(distance: f64, gamma: f64) -> f64 {
    (-(distance * distance) / (2.0 * gamma * gamma)).exp()
}
