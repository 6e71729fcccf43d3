//! Domain adaptation from noisy source labels: label-noise generators,
//! a small dense-network engine, the Butterfly dual-checking trainer, and
//! oracle-side metrics for measuring how much noise survives training.

pub mod butterfly;
pub mod config;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod runner;

pub use error::{Error, Result};
