//! Simulation and optimization toolkit for polarforming-antenna (PA)
//! enhanced integrated sensing and communication.
//!
//! * [`geometry`] – frames, rotations and subarray placement.
//! * [`channel`] – dual-polarized far-field LoS channel model.
//! * [`codebook`] – discrete polarforming amplitude/phase sets.
//! * [`localization`] – pilot simulation, PARAFAC factor extraction,
//!   MUSIC direction finding and range estimation.
//! * [`fast_opt`] – per-coherence-interval polarforming and precoding
//!   (WMMSE + penalty dual decomposition).
//! * [`slow_opt`] – subarray position/rotation search (recursive-sampling
//!   particle swarm).
//! * [`harness`] – scenarios, the two-timescale protocol, baselines and
//!   result export.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod fast_opt;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod slow_opt;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
