//! Equity-aware pairwise learning-to-rank.
//!
//! This crate holds the numerical core and performs no I/O. It is `no_std`
//! and only needs an allocator:
//!
//! - [`dataset`]: comparison records, feature tables and per-user splits.
//! - [`gbt`]: generalized Bradley-Terry fit of one user's latent item scores.
//! - [`robust`]: quadratically regularized median and the clipped resilient mean.
//! - [`scaling`]: min-max, normalization and collaborative (Mehestan) scaling.
//! - [`ltr`]: linear pairwise scorer with optional per-user offsets.
//! - [`equity`]: per-user accuracy/recall, max gap, standard deviation, Gini, Lorenz.
//! - [`simgen`]: seeded voter-population simulator with ground truth.
//!
//! File formats, the command line and the experiment pipeline live in the
//! `equirank` crate.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![no_std]

extern crate alloc;

pub mod dataset;
pub mod equity;
pub mod error;
pub mod gbt;
pub mod ltr;
pub mod robust;
pub mod scaling;
pub mod simgen;

pub use dataset::{Comparison, ComparisonSet, FeatureTable};
pub use error::{Error, Result};
