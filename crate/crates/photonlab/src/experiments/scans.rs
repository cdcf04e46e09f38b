use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use photonlab_core::analysis::{fit_rabi, fit_voigt_fixed_lorentzian, RabiModel, VoigtModel};
use photonlab_core::circuit::attenuate;
use photonlab_core::emitter::{step_spectral, PhotonSource, SpectralState};
use photonlab_core::fit::Model;
use photonlab_core::optics::{gaussian_fwhm_from_sigma, gaussian_sigma_from_fwhm};
use photonlab_core::rng::{self, Purpose, StreamRng};
use photonlab_core::{fourier_limit, voigt_fwhm};

use super::{derived_seed, Setup};
use crate::presets::{Expected, ExpectedValues, FPI_RESOLUTION_GHZ};
use crate::report::{ExperimentReport, Metric, Outcome, Scenario, Series};
use crate::{Error, Result};

/// Collected photons over `n_pulses` at the configured pulse area.
fn collected_photons(setup: &Setup, n_pulses: u64, seed: u64) -> Result<u64> {
    let mut src = PhotonSource::new(&setup.emitter, &setup.circuit, n_pulses, seed)?;
    let mut total = 0;
    while let Some((_, n)) = src.count_next_segment() {
        total += n;
    }
    Ok(total)
}

/// Photons that survive the waveguide and a detector.
fn detected(n: u64, setup: &Setup, rng: &mut StreamRng) -> u64 {
    let eta = attenuate(1.0, setup.circuit.attenuation_db_per_mm, setup.circuit.path_length_mm) * setup.detector.efficiency;
    if n == 0 || eta <= 0.0 {
        return 0;
    }
    Binomial::new(n, eta.min(1.0)).expect("valid binomial").sample(rng)
}

fn dark(setup: &Setup, n_pulses: u64, rng: &mut StreamRng) -> u64 {
    let mean = setup.detector.dark_rate_hz * n_pulses as f64 * setup.circuit.rep_period_ps as f64 * 1e-12;
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite mean").sample(rng) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpiSettings {
    /// Full scan width; defaults to six emitter linewidths.
    pub scan_range_ghz: Option<f64>,
    /// Defaults to a tenth of the emitter linewidth.
    pub step_ghz: Option<f64>,
    /// Pulses integrated at each interferometer setting.
    pub dwell_pulses: u64,
    /// Lorentzian FWHM of the interferometer transmission.
    pub resolution_ghz: f64,
    /// Spectral-diffusion samples averaged per setting.
    pub spectral_samples: usize,
}

impl Default for FpiSettings {
    fn default() -> Self {
        Self {
            scan_range_ghz: None,
            step_ghz: None,
            dwell_pulses: 152_000_000,
            resolution_ghz: FPI_RESOLUTION_GHZ,
            spectral_samples: 4_000,
        }
    }
}

/// Linewidth the emitter should show: Fourier limit combined with the
/// spectral-diffusion Gaussian.
fn emitter_linewidth(setup: &Setup) -> Result<(f64, f64)> {
    let f_l = fourier_limit(setup.emitter.tau_ps)?;
    Ok((f_l, voigt_fwhm(f_l, gaussian_fwhm_from_sigma(setup.emitter.sigma_g_ghz))?))
}

/// Interferometer detunings of the scan.
fn scan_grid(setup: &Setup, set: &FpiSettings) -> Result<(Vec<f64>, f64, f64)> {
    let (_, width) = emitter_linewidth(setup)?;
    let range = set.scan_range_ghz.unwrap_or(6.0 * width);
    let step = set.step_ghz.unwrap_or(width / 10.0);
    if !(range > 0.0 && step > 0.0) {
        return Err(Error::Config("scan range and step must be positive".into()));
    }
    if range < 3.0 * width {
        return Err(Error::Config(format!(
            "scan range {range:.3} GHz is below three linewidths ({:.3} GHz)",
            3.0 * width
        )));
    }
    let n = (range / step).round() as usize + 1;
    let grid = (0..n).map(|i| -0.5 * range + i as f64 * step).collect();
    Ok((grid, step, width))
}

/// Transmitted counts at each detuning of a scanning Fabry-Pérot.
///
/// At each setting the emitter line (Fourier-limited Lorentzian at a
/// spectral-diffusion detuning) is filtered by the interferometer Lorentzian;
/// the transmission is averaged over detunings sampled along the dwell and
/// applied to the photons collected in that time. Laser stray light is assumed
/// filtered out.
pub fn simulate_fpi(setup: &Setup, set: &FpiSettings, seed: u64) -> Result<Vec<(f64, f64)>> {
    setup.validate()?;
    let (grid, _, _) = scan_grid(setup, set)?;
    let f_l = fourier_limit(setup.emitter.tau_ps)?;
    let total_width = f_l + set.resolution_ghz;
    let peak = set.resolution_ghz / total_width;
    let half = 0.5 * total_width;
    let k = set.spectral_samples.max(1);
    let dwell_ps = set.dwell_pulses as f64 * setup.circuit.rep_period_ps as f64;
    let dt = dwell_ps / k as f64;
    let sigma = setup.emitter.sigma_g_ghz;

    let mut scan = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        let mut rng = rng::stream(seed, Purpose::Scan, i as u64);
        let n = collected_photons(setup, set.dwell_pulses, derived_seed(seed, 1000 + i as u64))?;
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut s = SpectralState { detuning_ghz: sigma * z };
        let mut mean_t = 0.0;
        for _ in 0..k {
            s = step_spectral(s, dt, sigma, setup.emitter.ou_tc_us, &mut rng);
            let u = (x - s.detuning_ghz) / half;
            mean_t += peak / (1.0 + u * u);
        }
        mean_t /= k as f64;
        let through = if n > 0 && mean_t > 0.0 {
            Binomial::new(n, mean_t.min(1.0)).expect("valid binomial").sample(&mut rng)
        } else {
            0
        };
        let counts = detected(through, setup, &mut rng) + dark(setup, set.dwell_pulses, &mut rng);
        scan.push((x, counts as f64));
    }
    Ok(scan)
}

/// Emitter linewidth from a transmission scan: Voigt fit with the Lorentzian
/// fixed at the Fourier limit plus the interferometer width.
pub fn analyze_fpi(
    mut report: ExperimentReport,
    scan: &[(f64, f64)],
    tau_ps: f64,
    resolution_ghz: f64,
    injected_sigma_g: Option<f64>,
    expected: Option<&ExpectedValues>,
) -> Result<Outcome> {
    let f_l = fourier_limit(tau_ps)?;
    let total: f64 = scan.iter().map(|p| p.1).sum();
    report.set("counts", Metric::exact(total));
    let mut s = Series::new("fpi_scan", "Fabry-Pérot scan", "detuning (GHz)", "counts", scan.to_vec()).markers();
    match fit_voigt_fixed_lorentzian(scan, f_l + resolution_ghz) {
        Ok(f) => {
            let f_g = f.value("f_g_ghz");
            let f_g_err = f.error("f_g_ghz");
            let fwhm = voigt_fwhm(f_l, f_g)?;
            let dfwhm = if f_g > 0.0 { f_g / (0.2166 * f_l * f_l + f_g * f_g).sqrt() } else { 0.0 };
            report.set("fwhm_ghz", Metric::new(fwhm, dfwhm * f_g_err));
            report.set("fourier_limit_ghz", Metric::exact(f_l));
            report.set("f_g_ghz", Metric::new(f_g, f_g_err));
            report.set("sigma_g_ghz", Metric::new(gaussian_sigma_from_fwhm(f_g), gaussian_sigma_from_fwhm(f_g_err)));
            report.set("instrument_fwhm_ghz", Metric::new(f.value("fwhm_ghz"), f.error("fwhm_ghz")));
            if !f.converged {
                report.fit_failed("Voigt fit", "did not converge");
            }
            if let Some(flag) = &f.flag {
                report.flag(format!("Voigt fit: {flag}"));
            }
            let model = VoigtModel { f_l_ghz: f_l + resolution_ghz };
            let p: Vec<f64> = f.params.iter().take(4).map(|p| p.value).collect();
            let (lo, hi) = (scan[0].0, scan[scan.len() - 1].0);
            s.model = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).map(|x| (x, model.eval(x, &p))).collect();
            let step = scan.windows(2).map(|w| (w[1].0 - w[0].0).abs()).fold(0.0, f64::max);
            if step > fwhm / 5.0 {
                report.flag(format!("scan step {step:.3} GHz exceeds a fifth of the linewidth"));
            }
            report.fits.insert("voigt".into(), f);
        }
        Err(e) => report.fit_failed("Voigt fit", e),
    }
    if let Some(e) = expected {
        report.check("fwhm_ghz", &e.linewidth_ghz);
    }
    if let Some(sg) = injected_sigma_g {
        report.set("sigma_g_injected_ghz", Metric::exact(sg));
        report.check("sigma_g_ghz", &Expected::new(sg, 0.0, 0.05 * sg));
    }
    Ok(Outcome { report, series: vec![s] })
}

pub fn run_fpi(setup: &Setup, set: &FpiSettings, seed: u64) -> Result<Outcome> {
    let (grid, step, width) = scan_grid(setup, set)?;
    let scan = simulate_fpi(setup, set, seed)?;
    let mut report = setup.report(Scenario::Fpi, seed, set.dwell_pulses * grid.len() as u64, set);
    report.set("scan_step_ghz", Metric::exact(step));
    report.set("expected_linewidth_ghz", Metric::exact(width));
    let injected = (setup.emitter.sigma_g_ghz > 0.0).then_some(setup.emitter.sigma_g_ghz);
    analyze_fpi(report, &scan, setup.emitter.tau_ps, set.resolution_ghz, injected, setup.expected.as_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiSettings {
    /// Excitation powers in units of the pi-pulse power.
    pub powers: Vec<f64>,
    pub pulses_per_point: u64,
}

impl Default for RabiSettings {
    fn default() -> Self {
        // Uniform in pulse area up to 2.5 pi.
        let powers = (1..=50).map(|i| (0.05 * i as f64).powi(2)).collect();
        Self { powers, pulses_per_point: 152_000_000 }
    }
}

/// Integrated intensity against excitation power. The pulse area scales as
/// the square root of the power.
pub fn simulate_rabi(setup: &Setup, set: &RabiSettings, seed: u64) -> Result<Vec<(f64, f64)>> {
    setup.validate()?;
    if set.powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Config("powers must be finite and non-negative".into()));
    }
    let mut out = Vec::with_capacity(set.powers.len());
    for (i, &p) in set.powers.iter().enumerate() {
        let mut s = setup.clone();
        s.emitter.pulse_area_rad = std::f64::consts::PI * p.sqrt();
        let mut rng = rng::stream(seed, Purpose::Scan, i as u64);
        let n = collected_photons(&s, set.pulses_per_point, derived_seed(seed, 1000 + i as u64))?;
        let counts = detected(n, &s, &mut rng) + dark(&s, set.pulses_per_point, &mut rng);
        out.push((p, counts as f64));
    }
    Ok(out)
}

/// Fewest power settings for a trustworthy Rabi fit.
pub const MIN_RABI_POINTS: usize = 8;

pub fn analyze_rabi(mut report: ExperimentReport, points: &[(f64, f64)], expected: Option<&ExpectedValues>) -> Result<Outcome> {
    let xs: Vec<(f64, f64)> = points.iter().map(|&(p, c)| (p.sqrt(), c)).collect();
    let mut s = Series::new("rabi", "Rabi oscillation", "sqrt(power / P_pi)", "counts", xs.clone()).markers();
    if points.len() < MIN_RABI_POINTS {
        report.flag(format!("under-sampled: {} power settings", points.len()));
    }
    match fit_rabi(&xs) {
        Ok(f) => {
            report.set("prep_fidelity", Metric::new(f.value("prep_fidelity"), f.error("prep_fidelity")));
            report.set("pi_power", Metric::new(f.value("pi_power"), f.error("pi_power")));
            report.set("gamma", Metric::new(f.value("gamma"), f.error("gamma")));
            if !f.converged {
                report.fit_failed("Rabi fit", f.flag.as_deref().unwrap_or("did not converge"));
            }
            let p: Vec<f64> = f.params.iter().take(3).map(|p| p.value).collect();
            let hi = xs.iter().map(|p| p.0).fold(0.0, f64::max);
            s.model = (0..=300).map(|i| hi * i as f64 / 300.0).map(|x| (x, RabiModel.eval(x, &p))).collect();
            report.fits.insert("rabi".into(), f);
        }
        Err(e) => report.fit_failed("Rabi fit", e),
    }
    if let Some(e) = expected {
        report.check("prep_fidelity", &e.prep_fidelity);
    }
    Ok(Outcome { report, series: vec![s] })
}

pub fn run_rabi(setup: &Setup, set: &RabiSettings, seed: u64) -> Result<Outcome> {
    let points = simulate_rabi(setup, set, seed)?;
    let report = setup.report(Scenario::Rabi, seed, set.pulses_per_point * set.powers.len() as u64, set);
    analyze_rabi(report, &points, setup.expected.as_ref())
}
