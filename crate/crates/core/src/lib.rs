//! Numeric core for continuous indeterminate-probability models.
//!
//! A neural encoder maps each input to per-dimension Gaussian parameters
//! `(mu, sigma)`. Class posteriors and image reconstructions are then computed
//! analytically from a sliding window of recorded training statistics,
//! estimated by Monte Carlo over reparameterized draws. Everything here is
//! `no_std` + `alloc`; file formats, dataset IO and the CLI live in the `cipnn`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]
// Index loops mirror the math; negated comparisons reject NaN on purpose.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod cipae;
pub mod data;
pub mod encoder;
mod error;
pub mod matrix;
pub mod optim;
pub mod posterior;
pub mod prob;
pub mod recorder;
pub mod regularization;
pub mod rng;
pub mod training;
pub mod vae;
pub mod viz;

pub use error::{Error, Result};
pub use matrix::Matrix;
