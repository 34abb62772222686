//! File formats and command-line front end for `imo-core`.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod format;
pub mod report;
pub mod weights;

pub use imo_core;
