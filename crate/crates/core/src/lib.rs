//! Blind virtual-pilot channel estimation for OFDM massive-MIMO uplinks.
//!
//! Users sound the channel with ordinary data symbols in round-robin slots.
//! The receiver averages the per-antenna covariance of each slot, which
//! washes out the channel realization and leaves the transmitted symbols up to
//! a known per-user reference. An optional DnCNN denoiser cleans up the
//! finite-array residue, the recovered symbols serve as virtual pilots for a
//! least-squares channel estimate, and linear combiners detect the data phase.
//!
//! The [`harness`] module runs Monte-Carlo comparisons against the
//! data-aided baseline and drives the `blindmimo` command-line tool.

pub mod channel;
pub mod dncnn;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod numerics;
pub mod ofdm;

pub use error::{Error, Result};
