use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use super::{BunchingFit, Estimate};
use crate::correlator::{CorrelationHistogram, PeakAreas};
use crate::fit::{levenberg_marquardt, poisson_sigma, FitOptions, Model};
use crate::special::laplace_gauss;
use crate::{Error, FitResult, Result};

/// Peaks on each side of zero included in the background fit.
pub const COMB_HALF_PEAKS: usize = 6;
/// First side peak used for the Poisson level of an interferometer histogram.
const HOM_FIRST_SIDE_PEAK: i64 = 3;

fn env_at(bunching: Option<&BunchingFit>, t_ps: f64) -> f64 {
    bunching.map_or(1.0, |b| b.envelope(t_ps))
}

/// `A_0 / mean(A_m / envelope(m T))` over side peaks `first <= |m| < first + n/2`.
pub fn extract_g2_raw_from(
    peaks: &PeakAreas,
    bunching: Option<&BunchingFit>,
    first: i64,
    n_side_peaks: usize,
) -> Result<Estimate> {
    let per_side = (n_side_peaks / 2).max(1) as i64;
    let last = first + per_side - 1;
    if last > peaks.max_index() {
        return Err(Error::InsufficientData("not enough side peaks in the histogram"));
    }
    let mut sum = 0.0;
    let mut var = 0.0;
    let mut n = 0.0;
    for m in (first..=last).flat_map(|m| [-m, m]) {
        let a = peaks.area(m).expect("index checked") as f64;
        let e = env_at(bunching, (m * peaks.period_ps as i64) as f64);
        sum += a / e;
        var += a / (e * e);
        n += 1.0;
    }
    if sum <= 0.0 {
        return Err(Error::InsufficientData("side peaks are empty"));
    }
    let level = sum / n;
    let a0 = peaks.central() as f64;
    let g = a0 / level;
    let rel_side = var.sqrt() / sum;
    let error = if a0 > 0.0 { g * (1.0 / a0 + rel_side * rel_side).sqrt() } else { 1.0 / level };
    Ok(Estimate::new(g, error))
}

/// Raw `g2(0)`: central peak area over the bunching-corrected mean of
/// `n_side_peaks` side peaks (half at positive, half at negative delay).
pub fn extract_g2_raw(peaks: &PeakAreas, bunching: Option<&BunchingFit>, n_side_peaks: usize) -> Result<Estimate> {
    extract_g2_raw_from(peaks, bunching, 1, n_side_peaks)
}

/// Comb of two-sided exponential peaks convolved with a Gaussian, on a flat floor.
///
/// Parameters: `[floor, A_0, A_-2, A_-1, A_1, A_2, A_s]`; `floor` is counts per
/// bin, areas are counts. Peaks `3 <= |m| <= 6` share the Poisson-level area
/// `A_s`, modulated by the observed bunching envelope, which already contains
/// the floor: `A_m = (A_s + F) env(m T) - F`, `F = floor * T / bin`.
#[derive(Debug, Clone)]
pub struct PeakCombModel {
    pub period_ps: f64,
    pub tau_ps: f64,
    /// Width of the coincidence IRF (both detectors), ps.
    pub sigma_ps: f64,
    pub bin_ps: f64,
    /// Envelope at `m T` for `m = -6..=6`.
    pub envelope: [f64; 2 * COMB_HALF_PEAKS + 1],
}

impl PeakCombModel {
    fn peak(&self, x: f64, m: i64) -> f64 {
        let u = x - m as f64 * self.period_ps;
        if u.abs() > 12.0 * self.sigma_ps + 40.0 * self.tau_ps {
            0.0
        } else {
            self.bin_ps * laplace_gauss(u, self.tau_ps, self.sigma_ps)
        }
    }

    fn free_slot(m: i64) -> Option<usize> {
        match m {
            -2 => Some(2),
            -1 => Some(3),
            1 => Some(4),
            2 => Some(5),
            _ => None,
        }
    }
}

impl Model for PeakCombModel {
    fn n_params(&self) -> usize {
        7
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let floor_area = p[0] * self.period_ps / self.bin_ps;
        let k = COMB_HALF_PEAKS as i64;
        let mut f = p[0];
        for m in -k..=k {
            let area = if m == 0 {
                p[1]
            } else if let Some(s) = Self::free_slot(m) {
                p[s]
            } else {
                (p[6] + floor_area) * self.envelope[(m + k) as usize] - floor_area
            };
            f += area * self.peak(x, m);
        }
        f
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) -> bool {
        let _ = p;
        let k = COMB_HALF_PEAKS as i64;
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = 1.0;
        for m in -k..=k {
            let shape = self.peak(x, m);
            if m == 0 {
                g[1] = shape;
            } else if let Some(s) = Self::free_slot(m) {
                g[s] = shape;
            } else {
                let e = self.envelope[(m + k) as usize];
                g[6] += e * shape;
                g[0] += (e - 1.0) * self.period_ps / self.bin_ps * shape;
            }
        }
        true
    }
}

/// Result of the background-corrected comb fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct G2BackgroundFit {
    /// Background-free central area over background-free Poisson-level area.
    pub g2_bgc: Estimate,
    pub central_area: f64,
    pub side_area: f64,
    /// Floor counts per bin.
    pub floor_per_bin: f64,
    /// Floor share of a raw Poisson-level peak, `F / (A_s + F)`.
    pub floor_fraction: f64,
    pub fit: FitResult,
}

/// Fit the central `±6` peaks of a fine correlation histogram with a comb of
/// IRF-convolved two-sided exponentials plus a flat floor.
///
/// `irf_sigma_ps` is the jitter of one detector; the coincidence IRF is `√2`
/// wider. `bunching`, when given, is the envelope measured on the coarse
/// histogram and sets the relative height of peaks `|m| >= 3`.
pub fn fit_g2_background(
    hist: &CorrelationHistogram,
    irf_sigma_ps: f64,
    period_ps: u64,
    tau_ps: f64,
    bunching: Option<&BunchingFit>,
) -> Result<G2BackgroundFit> {
    if !(tau_ps > 0.0) || period_ps == 0 {
        return Err(Error::Domain("need tau > 0 and a positive period"));
    }
    let k = COMB_HALF_PEAKS as i64;
    let t = period_ps as f64;
    let reach = (k as f64 + 0.5) * t;
    if (hist.range_ps as f64) < reach {
        return Err(Error::InsufficientData("histogram must cover the central ±6 peaks"));
    }
    let bin = hist.bin_ps as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &c) in hist.counts.iter().enumerate() {
        let x = hist.bin_center_ps(i) as f64;
        if x.abs() < reach {
            xs.push(x);
            ys.push(c as f64);
        }
    }
    let sig: Vec<f64> = ys.iter().map(|&y| poisson_sigma(y)).collect();

    let mut envelope = [1.0; 2 * COMB_HALF_PEAKS + 1];
    for m in -k..=k {
        envelope[(m + k) as usize] = env_at(bunching, m as f64 * t);
    }
    let model = PeakCombModel { period_ps: t, tau_ps, sigma_ps: SQRT_2 * irf_sigma_ps, bin_ps: bin, envelope };

    // Starting point from valley levels and window sums.
    let value_near = |x0: f64| {
        let i = xs.iter().position(|&x| x >= x0 - 0.5 * bin).unwrap_or(0);
        ys[i]
    };
    let valleys: Vec<f64> = (-k..k).map(|m| value_near((m as f64 + 0.5) * t)).collect();
    let floor0 = valleys.iter().sum::<f64>() / valleys.len() as f64;
    let window_area = |m: i64| {
        let c = m as f64 * t;
        xs.iter().zip(&ys).filter(|(x, _)| (*x - c).abs() < 0.5 * t).map(|(_, y)| y - floor0).sum::<f64>()
    };
    let outer: Vec<f64> = (3..=k).flat_map(|m| [-m, m]).map(|m| window_area(m) / envelope[(m + k) as usize]).collect();
    let side0 = (outer.iter().sum::<f64>() / outer.len() as f64).max(1.0);
    let p0 = [floor0, window_area(0).max(0.0), window_area(-2), window_area(-1), window_area(1), window_area(2), side0];
    let mut opts = FitOptions::unbounded(7).with_bounds(0, 0.0, f64::INFINITY);
    for i in 1..7 {
        opts = opts.with_bounds(i, 0.0, f64::INFINITY);
    }
    let out = levenberg_marquardt(&model, &xs, &ys, &sig, &p0, &opts)?;
    let fit = out.clone().into_result(&["floor", "a0", "a_m2", "a_m1", "a_p1", "a_p2", "a_side"]);
    let (floor, a0, a_s) = (out.params[0], out.params[1], out.params[6]);
    if a_s <= 0.0 {
        return Err(Error::InsufficientData("no side-peak signal above the floor"));
    }
    let (e0, es) = (out.errors[1], out.errors[6]);
    let g = a0 / a_s;
    let err = ((e0 / a_s).powi(2) + (g * es / a_s).powi(2)).sqrt();
    let floor_area = floor * t / bin;
    Ok(G2BackgroundFit {
        g2_bgc: Estimate::new(g, err),
        central_area: a0,
        side_area: a_s,
        floor_per_bin: floor,
        floor_fraction: floor_area / (a_s + floor_area),
        fit,
    })
}

/// Raw two-photon interference visibility `1 - g_par(0) / g_perp(0)`.
///
/// Both `g(0)` values are normalised to the Poisson level of side peaks with
/// `|m| >= 3`, which the interferometer delay leaves unaffected.
pub fn extract_vtpi_raw(
    peaks_copol: &PeakAreas,
    peaks_crosspol: &PeakAreas,
    bunching: Option<&BunchingFit>,
) -> Result<Estimate> {
    let k = peaks_copol.max_index().min(peaks_crosspol.max_index());
    if k < HOM_FIRST_SIDE_PEAK {
        return Err(Error::InsufficientData("not enough side peaks in the histogram"));
    }
    let n = 2 * (k - HOM_FIRST_SIDE_PEAK + 1) as usize;
    let par = extract_g2_raw_from(peaks_copol, bunching, HOM_FIRST_SIDE_PEAK, n)?;
    let perp = extract_g2_raw_from(peaks_crosspol, bunching, HOM_FIRST_SIDE_PEAK, n)?;
    visibility(par, perp)
}

fn visibility(par: Estimate, perp: Estimate) -> Result<Estimate> {
    if perp.value <= 0.0 {
        return Err(Error::Domain("cross-polarized g2(0) is zero"));
    }
    let r = par.value / perp.value;
    let rel_par = if par.value > 0.0 { par.error / par.value } else { 0.0 };
    let err = if par.value > 0.0 {
        r * (rel_par.powi(2) + (perp.error / perp.value).powi(2)).sqrt()
    } else {
        par.error / perp.value
    };
    Ok(Estimate::new(1.0 - r, err))
}

/// Inputs of the visibility correction.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VtpiInputs {
    /// Raw normalised central peak, co-polarized.
    pub g_par: Estimate,
    /// Raw normalised central peak, cross-polarized.
    pub g_perp: Estimate,
    /// Floor share of a Poisson-level peak in each dataset.
    pub floor_par: f64,
    pub floor_perp: f64,
    /// Background-free `g2(0)` of the source.
    pub g2: f64,
    pub r_b: f64,
    /// Bunching envelope at the interferometer delay (1 without blinking).
    pub env_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrectedVisibility {
    /// Mean wave-packet overlap.
    pub m: Estimate,
    /// Visibility after floor subtraction only.
    pub v_background_free: Estimate,
    pub clamped: bool,
    pub flag: Option<String>,
}

/// Indistinguishability from raw co/cross central peaks.
///
/// Each `g` is stripped of its floor, `g' = (g - b) / (1 - b)`. With one photon
/// per input the splitter gives `g'_par = e_T (R^2 + T^2 - 2RT M) + 2RT g2` and
/// `g'_perp = e_T (R^2 + T^2) + 2RT g2`, where `e_T` is the bunching envelope
/// at the delay, so `M = V' ((R^2 + T^2) + 2RT g2 / e_T) / (2RT)`.
pub fn correct_vtpi(inp: &VtpiInputs) -> Result<CorrectedVisibility> {
    let r = inp.r_b;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain("splitting ratio must lie in (0, 1)"));
    }
    if !(inp.env_t > 0.0) || !(0.0..1.0).contains(&inp.floor_par) || !(0.0..1.0).contains(&inp.floor_perp) {
        return Err(Error::Domain("floors must lie in [0, 1) and the envelope must be positive"));
    }
    let strip = |g: Estimate, b: f64| Estimate::new((g.value - b) / (1.0 - b), g.error / (1.0 - b));
    let par = strip(inp.g_par, inp.floor_par);
    let perp = strip(inp.g_perp, inp.floor_perp);
    let v = visibility(Estimate::new(par.value.max(0.0), par.error), perp)?;
    let t = 1.0 - r;
    let scale = ((r * r + t * t) + 2.0 * r * t * inp.g2.max(0.0) / inp.env_t) / (2.0 * r * t);
    let m = v.value * scale;
    let err = v.error * scale;
    let mut out = CorrectedVisibility {
        m: Estimate::new(m.clamp(0.0, 1.0), err),
        v_background_free: v,
        clamped: !(0.0..=1.0).contains(&m),
        flag: None,
    };
    if m < 0.0 && m + 2.0 * err < 0.0 {
        out.flag = Some(String::from("co-polarized peak exceeds cross-polarized peak"));
        out.m.value = 0.0;
    } else if out.clamped {
        out.flag = Some(String::from("overlap clamped to [0, 1]"));
    }
    Ok(out)
}
