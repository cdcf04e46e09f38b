//! Closed-form line-width relations.

use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::{Error, Result};

/// FWHM of a Gaussian divided by its standard deviation, `2 sqrt(2 ln 2)`.
pub const GAUSS_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub fn gaussian_sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / GAUSS_FWHM_PER_SIGMA
}

pub fn gaussian_fwhm_from_sigma(sigma: f64) -> f64 {
    sigma * GAUSS_FWHM_PER_SIGMA
}

/// Transform-limited linewidth (GHz) of an exponential wave packet with decay
/// constant `tau_ps`.
pub fn fourier_limit(tau_ps: f64) -> Result<f64> {
    if tau_ps.is_nan() || tau_ps <= 0.0 {
        return Err(Error::Domain("decay constant must be positive"));
    }
    Ok(1e3 / (2.0 * PI * tau_ps))
}

/// Olivero–Longbothum approximation to the FWHM of a Voigt profile.
pub fn voigt_fwhm(f_l_ghz: f64, f_g_ghz: f64) -> Result<f64> {
    if !(f_l_ghz >= 0.0 && f_g_ghz >= 0.0) {
        return Err(Error::Domain("Voigt component widths must be non-negative"));
    }
    Ok(0.5346 * f_l_ghz + (0.2166 * f_l_ghz * f_l_ghz + f_g_ghz * f_g_ghz).sqrt())
}

/// Gaussian FWHM that, combined with Lorentzian FWHM `f_l_ghz`, gives a Voigt FWHM
/// of `fwhm_ghz`.
pub fn voigt_gaussian_from_fwhm(fwhm_ghz: f64, f_l_ghz: f64) -> Result<f64> {
    if !(f_l_ghz >= 0.0 && fwhm_ghz.is_finite()) {
        return Err(Error::Domain("Voigt component widths must be non-negative"));
    }
    if fwhm_ghz < f_l_ghz {
        return Err(Error::Domain("Voigt width cannot be narrower than its Lorentzian part"));
    }
    // voigt_fwhm is strictly increasing in f_g, so bisection on [0, fwhm] is safe.
    let target = |g: f64| voigt_fwhm(f_l_ghz, g).map(|w| w - fwhm_ghz);
    let (mut lo, mut hi) = (0.0, fwhm_ghz);
    if target(lo)? >= 0.0 {
        return Ok(0.0);
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if target(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_limit_values() {
        assert!((fourier_limit(201.0).unwrap() - 0.7918).abs() < 5e-4);
        assert!((fourier_limit(135.0).unwrap() - 1.1789).abs() < 5e-4);
        assert!(fourier_limit(1e300).unwrap() < 1e-290);
        assert!(fourier_limit(0.0).is_err());
        assert!(fourier_limit(-3.0).is_err());
    }

    #[test]
    fn fourier_limit_identity() {
        for tau in [1.0, 17.0, 135.0, 201.0, 207.0, 1e4] {
            let f = fourier_limit(tau).unwrap();
            assert!((f * 2.0 * PI * tau - 1000.0).abs() < 1e-10);
        }
    }

    #[test]
    fn voigt_limits() {
        assert!((voigt_fwhm(2.5, 0.0).unwrap() - 2.5).abs() < 2.5 * 2e-4);
        assert_eq!(voigt_fwhm(0.0, 3.0).unwrap(), 3.0);
        assert!(voigt_fwhm(-1.0, 1.0).is_err());
        assert!(voigt_fwhm(1.0, -1.0).is_err());
    }

    #[test]
    fn voigt_inverse() {
        let g = voigt_gaussian_from_fwhm(4.82, 0.79).unwrap();
        assert!((g - 4.38).abs() < 5e-3, "{g}");
        assert_eq!(voigt_gaussian_from_fwhm(0.87, 0.87).unwrap(), 0.0);
        let g = voigt_gaussian_from_fwhm(6.73, 0.87).unwrap();
        assert!((voigt_fwhm(0.87, g).unwrap() - 6.73).abs() < 1e-6);
        assert!(voigt_gaussian_from_fwhm(0.5, 0.79).is_err());
    }
}
