//! Simulation and analysis core for a resonantly driven quantum-dot single-photon
//! source on a photonic chip.
//!
//! The crate is `no_std` and only needs `alloc`. Everything stochastic takes an
//! explicit seed and draws from counter-based ChaCha streams keyed by
//! `(seed, stream id)`, so results are bit-identical across hosts and segmentations.
//!
//! Conventions: times are integer picoseconds (`u64`) for tags and pulse
//! instants, decay constants are `f64` picoseconds, frequencies are `f64` GHz.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod circuit;
pub mod correlator;
pub mod emitter;
mod error;
pub mod fit;
pub mod optics;
pub mod rng;
pub mod special;
pub mod types;

pub use error::{Error, Result};
pub use optics::{fourier_limit, voigt_fwhm, voigt_gaussian_from_fwhm};
pub use types::{
    BlinkRates, CircuitConfig, DetectorConfig, EmitterConfig, FitParam, FitResult, Origin,
    PhotonPacket, PolConfig, Polarization, TimeTag,
};
