//! Dataset generation, training, evaluation and file formats for
//! constellation-image modulation classification.
//!
//! The numerical work lives in [`amc_core`]; this crate adds the file system:
//! PGM images, a JSON-lines manifest, JSON configs, CSV reports and the `FIFN`
//! checkpoint format, plus the `amc` command-line tool.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod checkpoint;
pub mod classify;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod pgm;
pub mod split;
pub mod train;

pub use error::{HarnessError, Result};
