//! Bounded Levenberg–Marquardt least squares for small, smooth models.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::{Error, FitResult, Result};

/// A scalar model `y = f(x; p)`.
pub trait Model {
    fn n_params(&self) -> usize;

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// Write `df/dp` into `grad`. Returns `false` when the model has no analytic
    /// Jacobian, in which case central differences are used.
    fn gradient(&self, _x: f64, _p: &[f64], _grad: &mut [f64]) -> bool {
        false
    }
}

/// Stopping and bounding parameters.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged once every accepted step changes each parameter by less than
    /// this fraction of its magnitude.
    pub rel_step_tol: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FitOptions {
    pub fn unbounded(n: usize) -> Self {
        Self {
            max_iterations: 200,
            rel_step_tol: 1e-8,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_bounds(mut self, i: usize, lo: f64, hi: f64) -> Self {
        self.lower[i] = lo;
        self.upper[i] = hi;
        self
    }
}

/// Raw optimiser output.
#[derive(Debug, Clone, PartialEq)]
pub struct LmOutput {
    pub params: Vec<f64>,
    /// 1-sigma errors, scaled by `sqrt(chi2_reduced)`.
    pub errors: Vec<f64>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_points: usize,
}

impl LmOutput {
    /// Package as a [`FitResult`] with the given parameter names.
    pub fn into_result(self, names: &[&str]) -> FitResult {
        let mut r = FitResult {
            chi2_reduced: self.chi2_reduced,
            converged: self.converged,
            n_points: self.n_points,
            iterations: self.iterations,
            ..Default::default()
        };
        for ((name, v), e) in names.iter().zip(&self.params).zip(&self.errors) {
            r.push(name, *v, *e);
        }
        if !self.converged {
            r.flag = Some(String::from("fit did not converge"));
        }
        r
    }
}

/// Poisson standard deviation with the variance floored at one count.
pub fn poisson_sigma(count: f64) -> f64 {
    count.max(1.0).sqrt()
}

/// Central-difference gradient of `model` with respect to its parameters.
pub fn numeric_gradient<M: Model + ?Sized>(model: &M, x: f64, p: &[f64], grad: &mut [f64]) {
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1e-6);
        q[j] = p[j] + h;
        let up = model.eval(x, &q);
        q[j] = p[j] - h;
        let dn = model.eval(x, &q);
        q[j] = p[j];
        grad[j] = (up - dn) / (2.0 * h);
    }
}

fn jacobian_row<M: Model + ?Sized>(model: &M, x: f64, p: &[f64], grad: &mut [f64]) {
    if !model.gradient(x, p, grad) {
        numeric_gradient(model, x, p, grad);
    }
}

fn chi2<M: Model + ?Sized>(model: &M, xs: &[f64], ys: &[f64], sig: &[f64], p: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .zip(sig)
        .map(|((&x, &y), &s)| {
            let r = (y - model.eval(x, p)) / s;
            r * r
        })
        .sum()
}

/// Solve `a x = b` for symmetric positive definite `a` (row-major, n x n).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Normal matrix `J^T J` and gradient `J^T r` of the weighted residuals.
fn normal_equations<M: Model + ?Sized>(
    model: &M,
    xs: &[f64],
    ys: &[f64],
    sig: &[f64],
    p: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = p.len();
    let mut a = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    let mut row = vec![0.0; n];
    for ((&x, &y), &s) in xs.iter().zip(ys).zip(sig) {
        jacobian_row(model, x, p, &mut row);
        let r = (y - model.eval(x, p)) / s;
        for i in 0..n {
            let ji = row[i] / s;
            g[i] += ji * r;
            for j in 0..=i {
                a[i * n + j] += ji * row[j] / s;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[j * n + i] = a[i * n + j];
        }
    }
    (a, g)
}

/// Minimise `sum((y - f(x; p)) / sigma)^2` starting from `p0`.
pub fn levenberg_marquardt<M: Model + ?Sized>(
    model: &M,
    xs: &[f64],
    ys: &[f64],
    sigmas: &[f64],
    p0: &[f64],
    opts: &FitOptions,
) -> Result<LmOutput> {
    let n = model.n_params();
    if p0.len() != n || opts.lower.len() != n || opts.upper.len() != n {
        return Err(Error::Config("parameter vector length does not match the model"));
    }
    if xs.len() != ys.len() || xs.len() != sigmas.len() {
        return Err(Error::Config("x, y and sigma must have equal length"));
    }
    if xs.len() <= n {
        return Err(Error::InsufficientData("fewer data points than parameters"));
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("uncertainties must be positive"));
    }
    let clamp = |p: &mut [f64]| {
        for j in 0..n {
            p[j] = p[j].clamp(opts.lower[j], opts.upper[j]);
        }
    };
    let mut p = p0.to_vec();
    clamp(&mut p);
    let mut cost = chi2(model, xs, ys, sigmas, &p);
    if !cost.is_finite() {
        return Err(Error::Domain("model is not finite at the starting point"));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let (mut a, mut g) = normal_equations(model, xs, ys, sigmas, &p);

    while iterations < opts.max_iterations {
        iterations += 1;
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut damped = a.clone();
        for i in 0..n {
            damped[i * n + i] += lambda * a[i * n + i].max(1e-12 * max_diag);
        }
        let Some(step) = cholesky_solve(&damped, &g, n) else {
            lambda *= 10.0;
            if lambda > 1e20 {
                break;
            }
            continue;
        };
        let mut trial = p.clone();
        for j in 0..n {
            trial[j] += step[j];
        }
        clamp(&mut trial);
        let trial_cost = chi2(model, xs, ys, sigmas, &trial);
        if trial_cost.is_finite() && trial_cost <= cost {
            let small = (0..n).all(|j| (trial[j] - p[j]).abs() <= opts.rel_step_tol * (p[j].abs() + opts.rel_step_tol));
            let flat = cost - trial_cost <= 1e-15 * cost;
            p = trial;
            cost = trial_cost;
            lambda = (lambda * 0.1).max(1e-12);
            (a, g) = normal_equations(model, xs, ys, sigmas, &p);
            if small || flat {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // No descent direction left: the current point is a minimum to
                // working precision.
                converged = true;
                break;
            }
        }
    }

    let dof = (xs.len() - n) as f64;
    let chi2_reduced = cost / dof;
    let errors = covariance_diagonal(&a, n)
        .into_iter()
        .map(|v| (v.max(0.0) * chi2_reduced).sqrt())
        .collect();
    Ok(LmOutput {
        converged: converged && p.iter().all(|v| v.is_finite()),
        params: p,
        errors,
        chi2: cost,
        chi2_reduced,
        iterations,
        n_points: xs.len(),
    })
}

/// Diagonal of `a^-1`; infinite where `a` is singular.
fn covariance_diagonal(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; n];
    let mut e = vec![0.0; n];
    for i in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[i] = 1.0;
        if let Some(col) = cholesky_solve(a, &e, n) {
            out[i] = col[i];
        } else {
            break;
        }
    }
    out
}
