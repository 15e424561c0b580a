//! Simulation and closed-form analysis of nonlinear power-amplifier distortion
//! radiated by large uniform planar arrays and active reconfigurable
//! intelligent surfaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: planar array layout and field-region boundaries.
//! - [`channel`]: exact/Fresnel array responses and the line-of-sight OFDM channel.
//! - [`waveform`]: MRT/ZF precoding, OFDM synthesis and the active-RIS path.
//! - [`amplifier`]: memory-polynomial PAs, EVM calibration and the Bussgang split.
//! - [`montecarlo`]: seeded frame ensembles.
//! - [`radiation`]: directional PSD scans and peak extraction.
//! - [`focal`]: predicted focal points of the distortion.
//! - [`validation`]: comparison of predicted focal points with simulated peaks.
//! - [`evaluation`]: SINDR, sum rate and distortion-aware scheduling.

pub mod amplifier;
pub mod channel;
mod dsp;
pub mod error;
pub mod evaluation;
pub mod focal;
pub mod geometry;
pub mod montecarlo;
pub mod radiation;
pub mod validation;
pub mod waveform;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Converts degrees to radians.
pub fn deg(value: f64) -> f64 {
    value.to_radians()
}

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
