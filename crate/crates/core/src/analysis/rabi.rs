use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::fit::{levenberg_marquardt, poisson_sigma, FitOptions, Model};
use crate::{Error, FitResult, Result};

/// Damped Rabi curve against `x = sqrt(power)`:
/// `A exp(-gamma theta) sin^2(theta / 2)`, `theta = pi x / x_pi`.
/// Parameters: `[amplitude, gamma, x_pi]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RabiModel;

impl Model for RabiModel {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let theta = PI * x / p[2];
        let s = (0.5 * theta).sin();
        p[0] * (-p[1] * theta).exp() * s * s
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) -> bool {
        let theta = PI * x / p[2];
        let (s, c) = (0.5 * theta).sin_cos();
        let damp = (-p[1] * theta).exp();
        let f = p[0] * damp * s * s;
        let df_dtheta = p[0] * damp * (s * c - p[1] * s * s);
        g[0] = damp * s * s;
        g[1] = -theta * f;
        g[2] = -df_dtheta * theta / p[2];
        true
    }
}

/// Fit integrated intensity against `sqrt(power)`. Returns `amplitude`, `gamma`,
/// `x_pi` (the square root of the pi-pulse power), `pi_power` and
/// `prep_fidelity = exp(-gamma pi)`.
pub fn fit_rabi(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::InsufficientData("a Rabi sweep needs at least four points"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let sig: Vec<f64> = ys.iter().map(|&y| poisson_sigma(y)).collect();

    let (ipk, ypk) = ys.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, y)| if y > a.1 { (i, y) } else { a });
    let after_min = ys[ipk..].iter().copied().fold(f64::INFINITY, f64::min);
    let oscillates = ipk + 1 < ys.len() && ipk > 0 && after_min < 0.8 * ypk;

    let x_pi0 = xs[ipk].max(f64::MIN_POSITIVE);
    let a0 = 1.5 * ypk.max(1.0);
    let gamma0 = (a0 / ypk.max(1.0)).ln() / PI;
    let x_max = xs.iter().copied().fold(0.0, f64::max);
    let opts = FitOptions::unbounded(3)
        .with_bounds(0, 0.0, f64::INFINITY)
        .with_bounds(1, 0.0, 10.0)
        .with_bounds(2, 1e-6 * x_max.max(1e-12), 10.0 * x_max.max(1e-12));
    let out = levenberg_marquardt(&RabiModel, &xs, &ys, &sig, &[a0, gamma0, x_pi0], &opts)?;
    let (gamma, gamma_err, x_pi, x_pi_err) = (out.params[1], out.errors[1], out.params[2], out.errors[2]);
    let mut fit = out.into_result(&["amplitude", "gamma", "x_pi"]);
    fit.push("pi_power", x_pi * x_pi, 2.0 * x_pi * x_pi_err);
    let fid = (-gamma * PI).exp();
    fit.push("prep_fidelity", fid, fid * PI * gamma_err);
    if !oscillates {
        fit.converged = false;
        fit.flag = Some(String::from("no Rabi oscillation in the data"));
    }
    Ok(fit)
}
