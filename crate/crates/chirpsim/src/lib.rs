//! Baseband simulation of LoRa chirp spread spectrum with a superposed
//! high-spreading-factor BPSK layer.
//!
//! The library models a two-layer transmission: a conventional low-SF LoRa
//! symbol carries the legacy payload, and a power-scaled segment of a high-SF
//! upchirp rides on top of it, BPSK-modulated by a single bit. The receiver
//! demodulates the low-SF symbol with the standard dechirp-and-DFT detector,
//! reconstructs and subtracts the low-SF waveform, and recovers the bit with
//! a coherent correlator.
//!
//! Modules:
//! - [`waveform`]: chirp synthesis, dechirping, DFT decision metric, decimation
//! - [`channel`]: two-layer composition and AWGN
//! - [`demod`]: symbol detection, cancellation, BPSK correlation, optional band-pass
//! - [`analysis`]: interference spectrum, error-rate theory, feasibility region
//! - [`sim`]: deterministic parallel Monte Carlo engine

pub mod analysis;
pub mod channel;
pub mod demod;
mod numeric;
pub mod sim;
pub mod waveform;

use thiserror::Error;

/// Library version string, recorded in CLI run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Errors returned by library operations.
#[derive(Debug, Error)]
pub enum ChirpError {
    /// A configuration value violates its documented range or relation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// Buffers disagree in length or oversampling rate.
    #[error("buffer mismatch: {0}")]
    BufferMismatch(String),
    /// A numeric argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, ChirpError>;

/// Converts a decibel value to linear scale. `f64::INFINITY` maps to
/// infinity and `f64::NEG_INFINITY` to zero.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}
