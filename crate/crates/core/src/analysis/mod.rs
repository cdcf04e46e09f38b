//! Parameter extraction from histograms and scans.

mod bunching;
mod decay;
mod g2;
mod lineshape;
mod rabi;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, SQRT_2};

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::special::erfcx;
use crate::{Error, Result};

pub use bunching::{fit_bunching, BunchingFit, BunchingModel};
pub use decay::{fit_decay, DecayModel};
pub use g2::{
    correct_vtpi, extract_g2_raw, extract_g2_raw_from, extract_vtpi_raw, fit_g2_background, CorrectedVisibility,
    G2BackgroundFit, PeakCombModel, VtpiInputs, COMB_HALF_PEAKS,
};
pub use lineshape::{fit_voigt_fixed_lorentzian, VoigtModel};
pub use rabi::{fit_rabi, RabiModel};

/// A value with its 1-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }
}

/// Expected two-photon visibility of two independent emitters with decay `tau_ps`
/// whose centre frequencies each wander as N(0, sigma_g^2).
///
/// Averages the Lorentzian overlap `1 / (1 + (2 pi delta tau)^2)` over the
/// Gaussian frequency difference `delta ~ N(0, 2 sigma_g^2)`.
pub fn remote_visibility(tau_ps: f64, sigma_g_ghz: f64) -> Result<f64> {
    if !(tau_ps > 0.0) || !(sigma_g_ghz >= 0.0) {
        return Err(Error::Domain("need tau > 0 and sigma_g >= 0"));
    }
    let s = 2.0 * PI * SQRT_2 * sigma_g_ghz * tau_ps * 1e-3;
    if s == 0.0 {
        return Ok(1.0);
    }
    Ok(FRAC_PI_2.sqrt() / s * erfcx(1.0 / (SQRT_2 * s)))
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub histogram: Histogram,
}

/// Mean, sample standard deviation and an `n_bins` histogram of `values`.
pub fn ensemble_stats(values: &[f64], n_bins: usize) -> Result<EnsembleStats> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("ensemble statistics need at least two values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("ensemble values must be finite"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let n_bins = n_bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let edges = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; n_bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    Ok(EnsembleStats { n: values.len(), mean, std: var.sqrt(), histogram: Histogram { edges, counts } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remote_visibility_limits() {
        assert_eq!(remote_visibility(201.0, 0.0).unwrap(), 1.0);
        let v = remote_visibility(201.0, 1.8605).unwrap();
        assert!((v - 0.30).abs() < 0.01, "{v}");
        assert!(remote_visibility(201.0, 1e6).unwrap() < 1e-3);
        assert!(remote_visibility(0.0, 1.0).is_err());
    }

    #[test]
    fn ensemble_basics() {
        let s = ensemble_stats(&[2.0, 2.0, 2.0], 4).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.histogram.counts.iter().sum::<u64>(), 3);
        let s = ensemble_stats(&[1.0, 3.0], 2).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!(ensemble_stats(&[1.0], 2).is_err());
    }
}
