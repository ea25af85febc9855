//! Core algorithms for constellation-image automatic modulation classification.
//!
//! The crate is `no_std` with `alloc`. It covers the full signal path:
//!
//! - [`modulation`]: unit-power alphabets for eight digital formats, random
//!   symbol frames and raised-cosine pulse shaping.
//! - [`channel`]: quasi-static multipath Rayleigh fading (ITU Pedestrian A)
//!   and SNR-calibrated complex AWGN.
//! - [`render`]: symbol-instant sampling and the decay-weighted histogram that
//!   turns I/Q points into gray-scale constellation images.
//! - [`nn`]: a small reverse-mode tensor engine with exactly the layers the
//!   classifier needs.
//! - [`fifnet`]: the flow-in-flow classifier graph built on top of [`nn`].
//!
//! File formats, dataset handling and the CLI live in the `amc` crate.
#![no_std]
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod channel;
pub mod error;
pub mod fifnet;
pub mod modulation;
pub mod nn;
pub mod render;
pub mod seed;

pub use error::{Error, Result};
pub use num_complex::Complex64;
