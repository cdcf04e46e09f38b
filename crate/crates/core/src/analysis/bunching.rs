use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::correlator::CorrelationHistogram;
use crate::fit::{levenberg_marquardt, poisson_sigma, FitOptions, LmOutput, Model};
use crate::{Error, FitResult, Result};

/// `p_inf (1 + a1 exp(-|x|/tau1) [+ a2 exp(-|x|/tau2)])` with `x` in µs.
/// Parameters: `[p_inf, a1, tau1_us]` or `[p_inf, a1, tau1_us, a2, tau2_us]`.
#[derive(Debug, Clone, Copy)]
pub struct BunchingModel {
    pub components: usize,
}

impl Model for BunchingModel {
    fn n_params(&self) -> usize {
        1 + 2 * self.components
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let t = x.abs();
        let mut env = 1.0;
        for c in 0..self.components {
            env += p[1 + 2 * c] * (-t / p[2 + 2 * c]).exp();
        }
        p[0] * env
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) -> bool {
        let t = x.abs();
        let mut env = 1.0;
        for c in 0..self.components {
            let (a, tau) = (p[1 + 2 * c], p[2 + 2 * c]);
            let e = (-t / tau).exp();
            env += a * e;
            g[1 + 2 * c] = p[0] * e;
            g[2 + 2 * c] = p[0] * a * e * t / (tau * tau);
        }
        g[0] = env;
        true
    }
}

/// Fitted points per side of zero delay; finer histograms are merged.
const MAX_POINTS_PER_SIDE: usize = 2000;

/// Two-timescale bunching of the coarse correlation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BunchingFit {
    pub a1: f64,
    pub tau_b1_us: f64,
    pub a2: f64,
    pub tau_b2_us: f64,
    /// On-time fraction `1 / (1 + a1 + a2)`.
    pub beta: f64,
    /// Poisson level per bin far from zero delay.
    pub p_inf: f64,
    pub fit: FitResult,
}

impl BunchingFit {
    /// A source without bunching.
    pub fn flat() -> Self {
        Self { a1: 0.0, tau_b1_us: 1.0, a2: 0.0, tau_b2_us: 1.0, beta: 1.0, p_inf: f64::NAN, fit: FitResult::default() }
    }

    /// `1 + a1 exp(-|t|/tau1) + a2 exp(-|t|/tau2)` at delay `t_ps`.
    pub fn envelope(&self, t_ps: f64) -> f64 {
        let t = t_ps.abs() * 1e-6;
        let term = |a: f64, tau: f64| if a == 0.0 { 0.0 } else { a * (-t / tau).exp() };
        1.0 + term(self.a1, self.tau_b1_us) + term(self.a2, self.tau_b2_us)
    }
}

fn run(model: BunchingModel, xs: &[f64], ys: &[f64], sig: &[f64], p0: &[f64], span_us: f64) -> Result<LmOutput> {
    let mut opts = FitOptions::unbounded(model.n_params()).with_bounds(0, 0.0, f64::INFINITY);
    for c in 0..model.components {
        opts = opts.with_bounds(1 + 2 * c, 0.0, 1e3).with_bounds(2 + 2 * c, 1e-3, 10.0 * span_us);
    }
    levenberg_marquardt(&model, xs, ys, sig, p0, &opts)
}

/// Fit the bunching envelope of a correlation histogram binned at the
/// repetition period, ignoring the zero-delay bin.
///
/// Both a one- and a two-timescale model are fitted; the two-timescale result
/// is kept only if it lowers the reduced chi-square and both amplitudes stay
/// resolved.
pub fn fit_bunching(hist: &CorrelationHistogram) -> Result<BunchingFit> {
    let z = hist.zero_bin();
    // Merge neighbouring periods so every fitted point carries enough counts for
    // Gaussian weights; the envelope is flat on that scale.
    let group = (z / MAX_POINTS_PER_SIDE).max(1);
    // A finite record holds fewer pairs at long delays: `D - |t|` instead of `D`.
    let d = hist.duration_ps as f64;
    let overlap = |t: f64| if d > t.abs() { d / (d - t.abs()) } else { 1.0 };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for side in [-1i64, 1] {
        for g in 0..z / group {
            let (mut x, mut y) = (0.0, 0.0);
            for j in 0..group {
                let i = (z as i64 + side * (1 + (g * group + j) as i64)) as usize;
                let t = hist.bin_center_ps(i) as f64;
                x += t;
                y += hist.counts[i] as f64 * overlap(t);
            }
            xs.push(x / group as f64 * 1e-6);
            ys.push(y);
        }
    }
    if xs.len() < 100 {
        return Err(Error::InsufficientData("bunching fit needs at least 100 side-peak bins"));
    }
    if ys.iter().all(|&y| y == 0.0) {
        return Err(Error::InsufficientData("no coincidences in the coarse histogram"));
    }
    let sig: Vec<f64> = ys.iter().map(|&y| poisson_sigma(y)).collect();
    let span_us = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    // Far-delay level and near-delay excess for the starting point.
    let far: Vec<f64> = xs.iter().zip(&ys).filter(|(x, _)| x.abs() > 0.8 * span_us).map(|(_, y)| *y).collect();
    let p_inf0 = (far.iter().sum::<f64>() / far.len().max(1) as f64).max(1e-9);
    let near: Vec<f64> = xs.iter().zip(&ys).filter(|(x, _)| x.abs() < 0.02 * span_us).map(|(_, y)| *y).collect();
    let a0 = (near.iter().sum::<f64>() / near.len().max(1) as f64 / p_inf0 - 1.0).max(1e-3);
    let t1 = 0.03 * span_us;
    let t2 = 0.1 * span_us;

    let one = run(BunchingModel { components: 1 }, &xs, &ys, &sig, &[p_inf0, a0, 0.05 * span_us], span_us)?;
    let mut best_two: Option<LmOutput> = None;
    for split in [0.5, 0.2, 0.8] {
        let p0 = [p_inf0, a0 * split, t1, a0 * (1.0 - split), t2];
        let two = run(BunchingModel { components: 2 }, &xs, &ys, &sig, &p0, span_us)?;
        if best_two.as_ref().is_none_or(|b| two.chi2 < b.chi2) {
            best_two = Some(two);
        }
    }
    let two = best_two.expect("at least one start");

    let resolved = |o: &LmOutput| {
        let (a1, t1, a2, t2) = (o.params[1], o.params[2], o.params[3], o.params[4]);
        a1 > 2.0 * o.errors[1] && a2 > 2.0 * o.errors[3] && (t1 / t2 - 1.0).abs() > 0.05
    };
    let use_two = two.converged && two.chi2_reduced < one.chi2_reduced && resolved(&two);

    let (p_inf, a1, tau1, a2, tau2, fit) = if use_two {
        let (mut a1, mut t1, mut a2, mut t2) = (two.params[1], two.params[2], two.params[3], two.params[4]);
        let mut fit = two.clone().into_result(&["p_inf", "a1", "tau_b1_us", "a2", "tau_b2_us"]);
        if t1 > t2 {
            core::mem::swap(&mut a1, &mut a2);
            core::mem::swap(&mut t1, &mut t2);
            fit.params.swap(1, 3);
            fit.params.swap(2, 4);
            fit.params[1].name = "a1".into();
            fit.params[2].name = "tau_b1_us".into();
            fit.params[3].name = "a2".into();
            fit.params[4].name = "tau_b2_us".into();
        }
        (two.params[0] / group as f64, a1, t1, a2, t2, fit)
    } else {
        let mut fit = one.clone().into_result(&["p_inf", "a1", "tau_b1_us"]);
        fit.push("a2", 0.0, 0.0);
        fit.push("tau_b2_us", one.params[2], one.errors[2]);
        (one.params[0] / group as f64, one.params[1], one.params[2], 0.0, one.params[2], fit)
    };
    let mut fit = fit;
    fit.params[0].value /= group as f64;
    fit.params[0].error /= group as f64;
    let beta = 1.0 / (1.0 + a1 + a2);
    let var_sum = fit.error("a1").powi(2) + fit.error("a2").powi(2);
    fit.push("beta", beta, beta * beta * var_sum.sqrt());
    if a1 + a2 < 1e-9 {
        fit.flag.get_or_insert_with(|| String::from("no bunching detected"));
    }
    Ok(BunchingFit { a1, tau_b1_us: tau1, a2, tau_b2_us: tau2, beta, p_inf, fit })
}
