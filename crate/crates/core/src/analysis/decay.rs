use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::correlator::TcspcHistogram;
use crate::fit::{levenberg_marquardt, poisson_sigma, FitOptions, Model};
use crate::special::exp_gauss;
use crate::{Error, FitResult, Result};

/// Counts per bin of an exponential decay starting at `t0` convolved with a
/// Gaussian IRF, on a flat floor. Parameters: `[area, tau, t0, background]`;
/// `area` is the total number of decay counts.
#[derive(Debug, Clone, Copy)]
pub struct DecayModel {
    pub irf_sigma_ps: f64,
    pub bin_ps: f64,
}

impl Model for DecayModel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * self.bin_ps * exp_gauss(x - p[2], p[1], self.irf_sigma_ps) + p[3]
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) -> bool {
        let (area, tau, t0) = (p[0], p[1], p[2]);
        let u = x - t0;
        let lam = 1.0 / tau;
        let e = exp_gauss(u, tau, self.irf_sigma_ps);
        let f = area * self.bin_ps * e;
        let s = self.irf_sigma_ps;
        let (df_dlam, df_du) = if s > 0.0 {
            let gauss = (-(u * u) / (2.0 * s * s)).exp() * area * self.bin_ps * lam / (2.0 * PI).sqrt();
            (f * (1.0 / lam + lam * s * s - u) - gauss * s, -lam * f + gauss / s)
        } else {
            (f * (1.0 / lam - u), -lam * f)
        };
        g[0] = self.bin_ps * e;
        g[1] = -df_dlam * lam * lam;
        g[2] = -df_du;
        g[3] = 1.0;
        true
    }
}

/// Fit a TCSPC histogram with an IRF-convolved mono-exponential on a floor.
pub fn fit_decay(hist: &TcspcHistogram, irf_sigma_ps: f64) -> Result<FitResult> {
    let total: u64 = hist.counts.iter().sum();
    if hist.counts.len() < 8 || total == 0 {
        return Err(Error::InsufficientData("TCSPC histogram is empty"));
    }
    let xs: Vec<f64> = (0..hist.counts.len()).map(|i| hist.bin_center_ps(i)).collect();
    let ys: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let sig: Vec<f64> = ys.iter().map(|&y| poisson_sigma(y)).collect();
    let bin = hist.bin_ps as f64;

    let mut sorted = ys.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let b0 = sorted[..sorted.len() / 10 + 1].iter().sum::<f64>() / (sorted.len() / 10 + 1) as f64;
    let (ipk, &ypk) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let above = (ypk - b0).max(1.0);
    let fall = ys[ipk..].iter().position(|&y| y - b0 < above / core::f64::consts::E).unwrap_or(1).max(1);
    let tau0 = (fall as f64 * bin).max(bin);
    let t00 = xs[ipk] - irf_sigma_ps;
    let area0 = (ys.iter().sum::<f64>() - b0 * ys.len() as f64).max(1.0);

    let model = DecayModel { irf_sigma_ps, bin_ps: bin };
    let span = xs[xs.len() - 1] + bin;
    let opts = FitOptions::unbounded(4)
        .with_bounds(0, 0.0, f64::INFINITY)
        .with_bounds(1, 1e-3 * bin, span)
        .with_bounds(2, -span, span)
        .with_bounds(3, 0.0, f64::INFINITY);
    let out = levenberg_marquardt(&model, &xs, &ys, &sig, &[area0, tau0, t00, b0], &opts)?;
    let mut r = out.into_result(&["amplitude", "tau_ps", "t0_ps", "background"]);
    if !r.value("tau_ps").is_finite() {
        r.converged = false;
        r.flag = Some(String::from("decay constant is not finite"));
    }
    Ok(r)
}
