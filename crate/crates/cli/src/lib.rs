//! File formats, command line and experiment pipeline for
//! [`equirank_core`].
//!
//! - [`io`]: comparison, feature, score, model and report files.
//! - [`config`]: the flat pipeline configuration and experiment labels.
//! - [`pipeline`]: the experiment grid and its summary table.
//! - [`commands`]: the `equirank` subcommands.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod scale;

pub use error::{CliError, Result};
