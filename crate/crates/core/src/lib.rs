//! Channel sounding and multiuser precoding evaluation.
//!
//! The crate is organised along the processing chain:
//!
//! - [`ofdm`]: sounding frame construction, CFO estimation/correction, LS channel
//!   estimation, delay-domain denoising and per-chain calibration.
//! - [`channel`]: synthetic position-tagged CSI generation and the link budget.
//! - [`dataset`]: the `.csid` dataset container and its statistics.
//! - [`precoding`]: MRT and phase-only weights, beam power maps.
//! - [`clustering`]: k-means user grouping with MRT or phase-only centroids.
//! - [`evaluation`]: SIR, cluster SIR, sum-rate and randomized sweeps.

pub mod channel;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod ofdm;
pub mod precoding;
pub mod seed;

mod cmath;
mod keyvalue;

pub use error::{Error, Result};
pub use num_complex::{Complex32, Complex64};
