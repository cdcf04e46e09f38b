use serde::{Deserialize, Serialize};

use photonlab_core::analysis::{
    correct_vtpi, extract_g2_raw, extract_g2_raw_from, extract_vtpi_raw, fit_bunching, fit_decay, fit_g2_background,
    BunchingFit, BunchingModel, DecayModel, G2BackgroundFit, PeakCombModel, VtpiInputs, COMB_HALF_PEAKS,
};
use photonlab_core::circuit::{simulate_tags, PhotonLedger, TagRun, Topology};
use photonlab_core::correlator::{peak_areas, tcspc, CorrelationHistogram, PeakAreas, TcspcHistogram};
use photonlab_core::fit::Model;
use photonlab_core::{PolConfig, TimeTag};

use super::{derived_seed, Setup};
use crate::parallel::par_correlate;
use crate::presets::ExpectedValues;
use crate::report::{ExperimentReport, Metric, Outcome, Scenario, Series, Status};
use crate::{Error, Result};

/// Fewest coincidences in the peak windows for a trustworthy report.
pub const MIN_COINCIDENCES: u64 = 1_000;
/// Shortest pulse train the correlation scenarios are meant for.
pub const MIN_PULSES: u64 = 1_000_000;
/// First side peak unaffected by the interferometer delay.
const HOM_FIRST_SIDE_PEAK: i64 = 3;

/// Binning of the fine and coarse correlation histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationSettings {
    pub fine_bin_ps: u64,
    /// Half-range of the fine histogram; with the default this holds 57 side
    /// peaks on each side.
    pub fine_range_ps: u64,
    pub coarse_range_ps: u64,
    /// Side peaks averaged for the raw `g2(0)`, both signs together.
    pub n_side_peaks: usize,
}

impl Default for CorrelationSettings {
    fn default() -> Self {
        Self { fine_bin_ps: 30, fine_range_ps: 377_775, coarse_range_ps: 2_000_000_000, n_side_peaks: 114 }
    }
}

/// What the analysis needs to know about the setup that recorded the tags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisInputs {
    pub period_ps: u64,
    /// Decay constant used for the peak shape.
    pub tau_ps: f64,
    /// Timing jitter of a single detector.
    pub irf_sigma_ps: f64,
    pub delay_ps: u64,
    pub fiber_bs_ratio: f64,
}

impl AnalysisInputs {
    pub fn from_setup(s: &Setup) -> Self {
        Self {
            period_ps: s.circuit.rep_period_ps,
            tau_ps: s.emitter.tau_ps,
            irf_sigma_ps: s.detector.irf_sigma_ps,
            delay_ps: s.circuit.delay_ps,
            fiber_bs_ratio: s.circuit.fiber_bs_ratio,
        }
    }

    /// Inputs for the lifetime detectors.
    pub fn for_tcspc(s: &Setup) -> Self {
        Self { irf_sigma_ps: s.tcspc_detector.irf_sigma_ps, ..Self::from_setup(s) }
    }
}

struct Correlations {
    fine: CorrelationHistogram,
    coarse: CorrelationHistogram,
    peaks: PeakAreas,
}

fn correlations(tags: [&[TimeTag]; 2], inp: &AnalysisInputs, set: &CorrelationSettings) -> Result<Correlations> {
    if set.fine_bin_ps == 0 || inp.period_ps % set.fine_bin_ps != 0 || (inp.period_ps / set.fine_bin_ps) % 2 == 0 {
        return Err(Error::Config(format!(
            "fine_bin_ps = {} must divide the period {} into an odd number of bins",
            set.fine_bin_ps, inp.period_ps
        )));
    }
    let fine = par_correlate(tags[0], tags[1], set.fine_bin_ps, set.fine_range_ps)?;
    let span = tags.iter().filter_map(|t| t.last()).map(|t| t.time_ps).max().unwrap_or(0);
    let coarse_range = set.coarse_range_ps.min(span / 2).max(inp.period_ps);
    let coarse = par_correlate(tags[0], tags[1], inp.period_ps, coarse_range)?;
    let peaks = peak_areas(&fine, inp.period_ps, inp.period_ps)?;
    Ok(Correlations { fine, coarse, peaks })
}

fn check_statistics(report: &mut ExperimentReport, peaks: &PeakAreas) {
    let total: u64 = peaks.areas.iter().sum();
    report.set("coincidences", Metric::exact(total as f64));
    if total < MIN_COINCIDENCES {
        report.status = Status::LowStatistics;
        report.flag(format!("low statistics: {total} coincidences in the peak windows"));
    }
}

fn bunching(report: &mut ExperimentReport, coarse: &CorrelationHistogram) -> Option<BunchingFit> {
    match fit_bunching(coarse) {
        Ok(b) => {
            report.set("beta", Metric::new(b.beta, b.fit.error("beta")));
            report.set("tau_b1_us", Metric::new(b.tau_b1_us, b.fit.error("tau_b1_us")));
            report.set("tau_b2_us", Metric::new(b.tau_b2_us, b.fit.error("tau_b2_us")));
            if !b.fit.converged {
                report.fit_failed("bunching fit", "did not converge");
            }
            if let Some(f) = &b.fit.flag {
                report.flag(format!("bunching fit: {f}"));
            }
            report.fits.insert("bunching".into(), b.fit.clone());
            Some(b)
        }
        Err(e) => {
            if report.status == Status::Ok {
                report.fit_failed("bunching fit", e);
            } else {
                report.flag(format!("bunching fit: {e}"));
            }
            None
        }
    }
}

fn comb_fit(
    report: &mut ExperimentReport,
    c: &Correlations,
    inp: &AnalysisInputs,
    b: Option<&BunchingFit>,
    key: &str,
) -> Option<G2BackgroundFit> {
    match fit_g2_background(&c.fine, inp.irf_sigma_ps, inp.period_ps, inp.tau_ps, b) {
        Ok(f) => {
            if !f.fit.converged && report.status == Status::Ok {
                report.fit_failed(key, "did not converge");
            }
            report.fits.insert(key.into(), f.fit.clone());
            Some(f)
        }
        Err(e) => {
            if report.status == Status::Ok {
                report.fit_failed(key, e);
            } else {
                report.flag(format!("{key}: {e}"));
            }
            None
        }
    }
}

fn fine_series(name: &str, title: &str, h: &CorrelationHistogram) -> Series {
    let pts = h.counts.iter().enumerate().map(|(i, &c)| (h.bin_center_ps(i) as f64 * 1e-3, c as f64)).collect();
    Series::new(name, title, "delay (ns)", "coincidences per bin", pts)
}

fn comb_overlay(h: &CorrelationHistogram, inp: &AnalysisInputs, b: Option<&BunchingFit>, f: &G2BackgroundFit) -> Vec<(f64, f64)> {
    let k = COMB_HALF_PEAKS as i64;
    let t = inp.period_ps as f64;
    let mut envelope = [1.0; 2 * COMB_HALF_PEAKS + 1];
    for m in -k..=k {
        envelope[(m + k) as usize] = b.map_or(1.0, |b| b.envelope(m as f64 * t));
    }
    let model = PeakCombModel {
        period_ps: t,
        tau_ps: inp.tau_ps,
        sigma_ps: std::f64::consts::SQRT_2 * inp.irf_sigma_ps,
        bin_ps: h.bin_ps as f64,
        envelope,
    };
    let p: Vec<f64> = f.fit.params.iter().take(7).map(|p| p.value).collect();
    (0..h.counts.len())
        .map(|i| h.bin_center_ps(i) as f64)
        .filter(|x| x.abs() < (k as f64 + 0.5) * t)
        .map(|x| (x * 1e-3, model.eval(x, &p)))
        .collect()
}

fn coarse_series(name: &str, h: &CorrelationHistogram, b: Option<&BunchingFit>) -> Series {
    let pts: Vec<(f64, f64)> =
        h.counts.iter().enumerate().map(|(i, &c)| (h.bin_center_ps(i) as f64 * 1e-6, c as f64)).collect();
    let mut s = Series::new(name, "Coarse correlation", "delay (µs)", "coincidences per period", pts).markers();
    if let Some(b) = b {
        let model = BunchingModel { components: 2 };
        let p = [b.p_inf, b.a1, b.tau_b1_us, b.a2, b.tau_b2_us];
        s.model = s.points.iter().filter(|(x, _)| *x != 0.0).map(|&(x, _)| (x, model.eval(x, &p))).collect();
    }
    s
}

fn record_ledger(report: &mut ExperimentReport, l: &PhotonLedger) {
    report.set("photons_emitted", Metric::exact(l.emitted as f64));
    report.set("photons_detected", Metric::exact(l.detected as f64));
    report.set("dark_counts", Metric::exact(l.dark_detected as f64));
    if !l.reconciles() {
        report.flag("photon ledger does not reconcile");
    }
}

fn check_pulses(report: &mut ExperimentReport, n_pulses: u64) {
    if n_pulses < MIN_PULSES {
        report.flag(format!("only {n_pulses} pulses; side-peak statistics are poor below {MIN_PULSES}"));
    }
}

pub fn simulate_hbt(setup: &Setup, n_pulses: u64, seed: u64) -> Result<TagRun> {
    setup.validate()?;
    let det = [setup.detector.clone(), setup.detector.clone()];
    Ok(simulate_tags(Topology::Hbt, &setup.emitter, &setup.circuit, &det, n_pulses, seed)?)
}

/// Raw and background-corrected `g2(0)` plus the blinking envelope from two
/// detector channels behind a splitter.
pub fn analyze_hbt(
    mut report: ExperimentReport,
    tags: [&[TimeTag]; 2],
    inp: &AnalysisInputs,
    set: &CorrelationSettings,
    expected: Option<&ExpectedValues>,
) -> Result<Outcome> {
    report.set("counts_ch0", Metric::exact(tags[0].len() as f64));
    report.set("counts_ch1", Metric::exact(tags[1].len() as f64));
    let c = correlations(tags, inp, set)?;
    check_statistics(&mut report, &c.peaks);
    let b = bunching(&mut report, &c.coarse);

    match extract_g2_raw(&c.peaks, b.as_ref(), set.n_side_peaks) {
        Ok(g) => report.set("g2_raw", Metric::new(g.value, g.error)),
        Err(e) => report.flag(format!("g2_raw: {e}")),
    }
    let bg = comb_fit(&mut report, &c, inp, b.as_ref(), "g2_background");
    if let Some(f) = &bg {
        report.set("g2_bgc", Metric::new(f.g2_bgc.value, f.g2_bgc.error));
        report.set("floor_fraction", Metric::exact(f.floor_fraction));
    }

    if let Some(e) = expected {
        for (name, exp) in [
            ("g2_raw", &e.g2_raw),
            ("g2_bgc", &e.g2_bgc),
            ("beta", &e.beta),
            ("tau_b1_us", &e.tau_b1_us),
            ("tau_b2_us", &e.tau_b2_us),
        ] {
            report.check(name, exp);
        }
    }

    let mut fine = fine_series("hbt_fine", "HBT correlation", &c.fine);
    if let Some(f) = &bg {
        fine.model = comb_overlay(&c.fine, inp, b.as_ref(), f);
    }
    let series = vec![fine, coarse_series("hbt_coarse", &c.coarse, b.as_ref())];
    Ok(Outcome { report, series })
}

/// HBT measurement: MMI outputs on two detectors.
pub fn run_hbt(setup: &Setup, n_pulses: u64, seed: u64, set: &CorrelationSettings) -> Result<Outcome> {
    let run = simulate_hbt(setup, n_pulses, seed)?;
    analyze_hbt_run(setup, &run, seed, set)
}

/// Analysis of a simulated HBT run, with its photon ledger.
pub fn analyze_hbt_run(setup: &Setup, run: &TagRun, seed: u64, set: &CorrelationSettings) -> Result<Outcome> {
    let n_pulses = run.n_pulses;
    let mut report = setup.report(Scenario::Hbt, seed, n_pulses, set);
    check_pulses(&mut report, n_pulses);
    record_ledger(&mut report, &run.ledger);
    let tags = [run.tags[0].as_slice(), run.tags[1].as_slice()];
    analyze_hbt(report, tags, &AnalysisInputs::from_setup(setup), set, setup.expected.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolSelection {
    Co,
    Cross,
    #[default]
    Both,
}

impl PolSelection {
    fn configs(self) -> &'static [PolConfig] {
        match self {
            PolSelection::Co => &[PolConfig::Co],
            PolSelection::Cross => &[PolConfig::Cross],
            PolSelection::Both => &[PolConfig::Co, PolConfig::Cross],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomSettings {
    pub correlation: CorrelationSettings,
    pub pol: PolSelection,
    /// Background-free `g2(0)` of the source used in the visibility correction;
    /// defaults to the preset's measured value.
    pub g2_bgc: Option<f64>,
}

impl Default for HomSettings {
    fn default() -> Self {
        Self { correlation: CorrelationSettings::default(), pol: PolSelection::Both, g2_bgc: None }
    }
}

/// Tag records of the co- and cross-polarized interferometer runs.
#[derive(Debug, Clone, Default)]
pub struct HomTags {
    pub co: Option<TagRun>,
    pub cross: Option<TagRun>,
}

/// Seed of the cross-polarized run, so both configurations are independent.
fn cross_seed(seed: u64) -> u64 {
    derived_seed(seed, 1)
}

pub fn simulate_hom(setup: &Setup, pol: PolSelection, n_pulses: u64, seed: u64) -> Result<HomTags> {
    setup.validate()?;
    let det = [setup.detector.clone(), setup.detector.clone()];
    let mut out = HomTags::default();
    for &cfg in pol.configs() {
        let circuit = photonlab_core::CircuitConfig { pol_config: cfg, ..setup.circuit.clone() };
        let s = if cfg == PolConfig::Co { seed } else { cross_seed(seed) };
        let run = simulate_tags(Topology::Hom, &setup.emitter, &circuit, &det, n_pulses, s)?;
        match cfg {
            PolConfig::Co => out.co = Some(run),
            PolConfig::Cross => out.cross = Some(run),
        }
    }
    Ok(out)
}

/// Raw visibility and wave-packet overlap from co- and cross-polarized
/// interferometer tags. `g2_bgc` is the source's background-free `g2(0)`.
pub fn analyze_hom(
    mut report: ExperimentReport,
    co: Option<[&[TimeTag]; 2]>,
    cross: Option<[&[TimeTag]; 2]>,
    inp: &AnalysisInputs,
    set: &CorrelationSettings,
    g2_bgc: Option<f64>,
    expected: Option<&ExpectedValues>,
) -> Result<Outcome> {
    if co.is_none() && cross.is_none() {
        return Err(Error::Usage("HOM analysis needs co- or cross-polarized tags".into()));
    }
    let co_c = co.map(|t| correlations(t, inp, set)).transpose()?;
    let cross_c = cross.map(|t| correlations(t, inp, set)).transpose()?;
    let mut merged: Option<CorrelationHistogram> = None;
    for c in co_c.iter().chain(cross_c.iter()) {
        check_statistics(&mut report, &c.peaks);
        match &mut merged {
            None => merged = Some(c.coarse.clone()),
            Some(m) if m.counts.len() == c.coarse.counts.len() => m.merge(&c.coarse)?,
            Some(_) => {}
        }
    }
    let b = bunching(&mut report, merged.as_ref().expect("one dataset"));
    let n_side = 2 * (set.n_side_peaks / 2).saturating_sub(HOM_FIRST_SIDE_PEAK as usize - 1).max(1);
    let mut series = Vec::new();

    let mut one = |c: &Correlations, tag: &str, report: &mut ExperimentReport| {
        let g = extract_g2_raw_from(&c.peaks, b.as_ref(), HOM_FIRST_SIDE_PEAK, n_side);
        if let Ok(g) = &g {
            report.set(&format!("g_{tag}"), Metric::new(g.value, g.error));
        }
        let bg = comb_fit(report, c, inp, b.as_ref(), &format!("comb_{tag}"));
        let mut s = fine_series(&format!("hom_{tag}"), &format!("HOM correlation, {tag}"), &c.fine);
        if let Some(f) = &bg {
            s.model = comb_overlay(&c.fine, inp, b.as_ref(), f);
        }
        series.push(s);
        (g.ok(), bg)
    };
    let co_r = co_c.as_ref().map(|c| one(c, "par", &mut report));
    let cross_r = cross_c.as_ref().map(|c| one(c, "perp", &mut report));

    if let (Some(a), Some(b2)) = (&co_c, &cross_c) {
        match extract_vtpi_raw(&a.peaks, &b2.peaks, b.as_ref()) {
            Ok(v) => report.set("v_raw", Metric::new(v.value, v.error)),
            Err(e) => report.flag(format!("v_raw: {e}")),
        }
        let g2 = match g2_bgc.or(expected.map(|e| e.g2_bgc.value)) {
            Some(g) => g,
            None => {
                report.flag("no g2(0) given for the visibility correction; assuming 0");
                0.0
            }
        };
        report.set("g2_bgc_input", Metric::exact(g2));
        if let (Some((Some(gp), Some(fp))), Some((Some(gc), Some(fc)))) = (&co_r, &cross_r) {
            let env_t = b.as_ref().map_or(1.0, |b| b.envelope(inp.delay_ps as f64));
            let inputs = VtpiInputs {
                g_par: *gp,
                g_perp: *gc,
                floor_par: fp.floor_fraction,
                floor_perp: fc.floor_fraction,
                g2,
                r_b: inp.fiber_bs_ratio,
                env_t,
            };
            match correct_vtpi(&inputs) {
                Ok(m) => {
                    report.set("m", Metric::new(m.m.value, m.m.error));
                    report.set("v_background_free", Metric::new(m.v_background_free.value, m.v_background_free.error));
                    if let Some(f) = m.flag {
                        report.flag(format!("visibility correction: {f}"));
                    }
                }
                Err(e) => report.flag(format!("visibility correction: {e}")),
            }
        }
        if let Some(e) = expected {
            if inp.delay_ps == inp.period_ps {
                report.check("v_raw", &e.v_raw);
                report.check("m", &e.v_corr);
            } else {
                report.flag("delay differs from the repetition period; not compared with measured values");
            }
        }
    }
    series.push(coarse_series("hom_coarse", merged.as_ref().expect("one dataset"), b.as_ref()));
    Ok(Outcome { report, series })
}

/// Unbalanced Mach-Zehnder with delay `T`: MMI, delay arm, fibre splitter, two
/// detectors; co- and/or cross-polarized.
pub fn run_hom(setup: &Setup, n_pulses: u64, seed: u64, set: &HomSettings) -> Result<Outcome> {
    let runs = simulate_hom(setup, set.pol, n_pulses, seed)?;
    analyze_hom_runs(setup, &runs, n_pulses, seed, set)
}

/// Analysis of simulated HOM runs, with their photon ledgers.
pub fn analyze_hom_runs(setup: &Setup, runs: &HomTags, n_pulses: u64, seed: u64, set: &HomSettings) -> Result<Outcome> {
    let mut report = setup.report(Scenario::Hom, seed, n_pulses, set);
    check_pulses(&mut report, n_pulses);
    let mut ledger = PhotonLedger::default();
    for run in runs.co.iter().chain(runs.cross.iter()) {
        ledger.merge(&run.ledger);
    }
    record_ledger(&mut report, &ledger);
    // Mean overlap of the pairs that actually met on the splitter (co only).
    if let Some(h) = runs.co.as_ref().and_then(|r| r.hom) {
        if h.overlap_pairs > 0 {
            report.set("m_injected", Metric::exact(h.mean_overlap()));
        }
    }
    analyze_hom(
        report,
        runs.co.as_ref().map(pair),
        runs.cross.as_ref().map(pair),
        &AnalysisInputs::from_setup(setup),
        &set.correlation,
        set.g2_bgc,
        setup.expected.as_ref(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcspcSettings {
    pub bin_ps: u64,
}

impl Default for TcspcSettings {
    fn default() -> Self {
        Self { bin_ps: 10 }
    }
}

pub fn simulate_tcspc(setup: &Setup, n_pulses: u64, seed: u64) -> Result<TagRun> {
    setup.validate()?;
    let det = [setup.tcspc_detector.clone(), setup.tcspc_detector.clone()];
    Ok(simulate_tags(Topology::Hbt, &setup.emitter, &setup.circuit, &det, n_pulses, seed)?)
}

/// Decay constant from tags of any number of channels sharing one clock.
pub fn analyze_tcspc(
    mut report: ExperimentReport,
    channels: &[&[TimeTag]],
    inp: &AnalysisInputs,
    set: &TcspcSettings,
    expected: Option<&ExpectedValues>,
) -> Result<Outcome> {
    let mut hist: Option<TcspcHistogram> = None;
    for tags in channels {
        let h = tcspc(tags, inp.period_ps, inp.period_ps, set.bin_ps)?;
        match &mut hist {
            None => hist = Some(h),
            Some(acc) => acc.counts.iter_mut().zip(&h.counts).for_each(|(a, c)| *a += c),
        }
    }
    let hist = hist.ok_or_else(|| Error::Usage("TCSPC analysis needs at least one channel".into()))?;
    let total: u64 = hist.counts.iter().sum();
    report.set("counts", Metric::exact(total as f64));
    if total < MIN_COINCIDENCES {
        report.status = Status::LowStatistics;
        report.flag(format!("low statistics: {total} counts"));
    }
    let pts: Vec<(f64, f64)> = (0..hist.counts.len()).map(|i| (hist.bin_center_ps(i) * 1e-3, hist.counts[i] as f64)).collect();
    let mut s = Series::new("tcspc", "Time-resolved photoluminescence", "time (ns)", "counts per bin", pts);
    match fit_decay(&hist, inp.irf_sigma_ps) {
        Ok(f) => {
            report.set("tau_ps", Metric::new(f.value("tau_ps"), f.error("tau_ps")));
            if !f.converged {
                report.fit_failed("decay fit", "did not converge");
            }
            let model = DecayModel { irf_sigma_ps: inp.irf_sigma_ps, bin_ps: hist.bin_ps as f64 };
            let p: Vec<f64> = f.params.iter().take(4).map(|p| p.value).collect();
            s.model = (0..hist.counts.len()).map(|i| (hist.bin_center_ps(i) * 1e-3, model.eval(hist.bin_center_ps(i), &p))).collect();
            report.fits.insert("decay".into(), f);
        }
        Err(e) => report.fit_failed("decay fit", e),
    }
    if let Some(e) = expected {
        report.check("tau_ps", &e.tau_ps);
    }
    Ok(Outcome { report, series: vec![s] })
}

/// Lifetime measurement with the low-jitter detectors.
pub fn run_tcspc(setup: &Setup, n_pulses: u64, seed: u64, set: &TcspcSettings) -> Result<Outcome> {
    let run = simulate_tcspc(setup, n_pulses, seed)?;
    analyze_tcspc_run(setup, &run, seed, set)
}

/// Analysis of a simulated lifetime run, with its photon ledger.
pub fn analyze_tcspc_run(setup: &Setup, run: &TagRun, seed: u64, set: &TcspcSettings) -> Result<Outcome> {
    let mut report = setup.report(Scenario::Tcspc, seed, run.n_pulses, set);
    record_ledger(&mut report, &run.ledger);
    let ch = [run.tags[0].as_slice(), run.tags[1].as_slice()];
    analyze_tcspc(report, &ch, &AnalysisInputs::for_tcspc(setup), set, setup.expected.as_ref())
}

fn pair(r: &TagRun) -> [&[TimeTag]; 2] {
    [r.tags[0].as_slice(), r.tags[1].as_slice()]
}
