//! Channel estimation and Bayesian bounds for one-bit oversampled multi-user
//! MIMO uplinks, plus the Monte Carlo sweeps around them.

pub mod bounds;
pub mod channel;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod orthant;
pub mod quantize;
pub mod records;
pub mod rng;
pub mod selftest;
pub mod signal;
pub mod system;

pub use error::{Error, Result};
