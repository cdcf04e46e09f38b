use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::fit::{levenberg_marquardt, poisson_sigma, FitOptions, Model};
use crate::optics::{gaussian_fwhm_from_sigma, gaussian_sigma_from_fwhm, voigt_fwhm};
use crate::special::voigt_with_derivatives;
use crate::{Error, FitResult, Result};

/// `amplitude * Voigt(x - centre; sigma, f_l / 2) + background`.
/// Parameters: `[amplitude, centre_ghz, sigma_ghz, background]`.
#[derive(Debug, Clone, Copy)]
pub struct VoigtModel {
    pub f_l_ghz: f64,
}

impl Model for VoigtModel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * voigt_with_derivatives(x - p[1], p[2], 0.5 * self.f_l_ghz).0 + p[3]
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) -> bool {
        let (v, dx, ds) = voigt_with_derivatives(x - p[1], p[2], 0.5 * self.f_l_ghz);
        g[0] = v;
        g[1] = -p[0] * dx;
        g[2] = p[0] * ds;
        g[3] = 1.0;
        true
    }
}

/// Fit a transmission scan `(detuning_ghz, counts)` with a Voigt whose
/// Lorentzian FWHM is frozen at `f_l_ghz`; only the Gaussian part is free.
///
/// The result carries `f_g_ghz` and `fwhm_ghz` (Voigt width of `f_l_ghz` and
/// the fitted Gaussian).
pub fn fit_voigt_fixed_lorentzian(scan: &[(f64, f64)], f_l_ghz: f64) -> Result<FitResult> {
    if scan.len() < 20 {
        return Err(Error::InsufficientData("a linewidth scan needs at least 20 points"));
    }
    if !(f_l_ghz >= 0.0) {
        return Err(Error::Domain("Lorentzian width must be non-negative"));
    }
    let xs: Vec<f64> = scan.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = scan.iter().map(|s| s.1).collect();
    let sig: Vec<f64> = ys.iter().map(|&y| poisson_sigma(y)).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let b0 = ys.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let (ipk, ypk) = ys.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, y)| if y > a.1 { (i, y) } else { a });
    let half = b0 + 0.5 * (ypk - b0);
    let above: Vec<f64> = xs.iter().zip(&ys).filter(|(_, y)| **y >= half).map(|(x, _)| *x).collect();
    let width0 = (above.iter().copied().fold(f64::NEG_INFINITY, f64::max) - above.iter().copied().fold(f64::INFINITY, f64::min))
        .max((hi - lo) / scan.len() as f64);
    let sigma0 = gaussian_sigma_from_fwhm(width0.max(f_l_ghz)).max(1e-3);
    let step = (hi - lo) / (scan.len() - 1) as f64;
    let area0 = ((ys.iter().sum::<f64>() - b0 * ys.len() as f64) * step).max(1e-9);

    let model = VoigtModel { f_l_ghz };
    let opts = FitOptions::unbounded(4)
        .with_bounds(0, 0.0, f64::INFINITY)
        .with_bounds(1, lo, hi)
        .with_bounds(2, 0.0, hi - lo)
        .with_bounds(3, 0.0, f64::INFINITY);
    let out = levenberg_marquardt(&model, &xs, &ys, &sig, &[area0, xs[ipk], sigma0, b0], &opts)?;
    let (sigma, sigma_err) = (out.params[2], out.errors[2]);
    let mut fit = out.into_result(&["amplitude", "centre_ghz", "sigma_g_ghz", "background"]);
    let f_g = gaussian_fwhm_from_sigma(sigma);
    let f_g_err = gaussian_fwhm_from_sigma(sigma_err);
    let fwhm = voigt_fwhm(f_l_ghz, f_g)?;
    let dfwhm = if f_g > 0.0 { f_g / (0.2166 * f_l_ghz * f_l_ghz + f_g * f_g).sqrt() } else { 0.0 };
    fit.push("f_g_ghz", f_g, f_g_err);
    fit.push("fwhm_ghz", fwhm, dfwhm * f_g_err);
    if hi - lo < 3.0 * fwhm {
        fit.flag = Some(String::from("scan spans fewer than three linewidths"));
    }
    Ok(fit)
}
