use std::f64::consts::PI;

use photonlab_core::analysis::{
    correct_vtpi, ensemble_stats, extract_g2_raw, extract_vtpi_raw, fit_bunching, fit_decay, fit_g2_background,
    fit_rabi, fit_voigt_fixed_lorentzian, BunchingModel, DecayModel, Estimate, PeakCombModel, RabiModel, VoigtModel,
    VtpiInputs, COMB_HALF_PEAKS,
};
use photonlab_core::correlator::{CorrelationHistogram, PeakAreas, TcspcHistogram};
use photonlab_core::fit::{levenberg_marquardt, FitOptions, Model};
use proptest::prelude::*;

const PERIOD: u64 = 6570;

fn peaks(areas: Vec<u64>) -> PeakAreas {
    PeakAreas { period_ps: PERIOD, window_ps: 2190, areas }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// Central differences with a step relative to each parameter.
fn check_gradient<M: Model>(model: &M, xs: &[f64], p: &[f64]) {
    let n = p.len();
    let mut g = vec![0.0; n];
    for &x in xs {
        assert!(model.gradient(x, p, &mut g));
        for i in 0..n {
            let h = 1e-6 * p[i].abs().max(1e-3);
            let mut up = p.to_vec();
            let mut dn = p.to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (model.eval(x, &up) - model.eval(x, &dn)) / (2.0 * h);
            // Rounding in the difference quotient sets an absolute floor.
            let noise = 100.0 * f64::EPSILON * model.eval(x, p).abs() / h;
            let tol = 1e-4 * g[i].abs().max(fd.abs()) + noise;
            assert!((g[i] - fd).abs() <= tol, "param {i} at x={x}: {} vs {fd}", g[i]);
        }
    }
}

fn comb_model() -> PeakCombModel {
    let k = COMB_HALF_PEAKS as i64;
    let mut envelope = [1.0; 2 * COMB_HALF_PEAKS + 1];
    for m in -k..=k {
        envelope[(m + k) as usize] = 1.0 + 0.9 * (-(m.abs() as f64) * PERIOD as f64 * 1e-6 / 65.0).exp();
    }
    PeakCombModel { period_ps: PERIOD as f64, tau_ps: 201.0, sigma_ps: 25.0 * 2f64.sqrt(), bin_ps: 16.0, envelope }
}

proptest! {
    #[test]
    fn g2_is_scale_invariant(areas in prop::collection::vec(1u64..10_000, 13), k in 2u64..50) {
        let a = extract_g2_raw(&peaks(areas.clone()), None, 8).unwrap();
        let b = extract_g2_raw(&peaks(areas.iter().map(|x| x * k).collect()), None, 8).unwrap();
        prop_assert!(rel(a.value, b.value) < 1e-12);
    }

    #[test]
    fn identical_datasets_have_no_visibility(areas in prop::collection::vec(1u64..10_000, 15)) {
        let v = extract_vtpi_raw(&peaks(areas.clone()), &peaks(areas), None).unwrap();
        prop_assert!(v.value.abs() < 1e-12);
    }

    #[test]
    fn correction_is_identity_for_a_clean_balanced_source(par in 0.0f64..0.6, perp in 0.6f64..1.2) {
        let inp = VtpiInputs {
            g_par: Estimate::new(par, 0.01),
            g_perp: Estimate::new(perp, 0.01),
            floor_par: 0.0,
            floor_perp: 0.0,
            g2: 0.0,
            r_b: 0.5,
            env_t: 1.0,
        };
        let c = correct_vtpi(&inp).unwrap();
        prop_assert!((c.m.value - (1.0 - par / perp)).abs() < 1e-12);
        prop_assert!((c.v_background_free.value - c.m.value).abs() < 1e-12);
    }
}

#[test]
fn visibility_from_quarter_central_peak() {
    let side = 10_000u64;
    let mut co = vec![side; 15];
    let mut cross = vec![side; 15];
    cross[7] = 5_000;
    co[7] = 1_200;
    // Peaks at |m| = 1, 2 carry the interferometer delay and are ignored.
    co[6] = 3;
    cross[8] = 99_999;
    let v = extract_vtpi_raw(&peaks(co), &peaks(cross), None).unwrap();
    assert!((v.value - 0.76).abs() < 1e-12, "{}", v.value);
}

#[test]
fn g2_of_flat_comb() {
    let mut a = vec![1_000u64; 13];
    a[6] = 100;
    let g = extract_g2_raw(&peaks(a), None, 8).unwrap();
    assert!((g.value - 0.1).abs() < 1e-12);
    assert!(g.error > 0.0);
    assert!(extract_g2_raw(&peaks(vec![5; 5]), None, 8).is_err());
}

#[test]
fn correction_with_multiphoton_and_floor() {
    let inp = VtpiInputs {
        g_par: Estimate::new(0.3, 0.0),
        g_perp: Estimate::new(0.6, 0.0),
        floor_par: 0.1,
        floor_perp: 0.1,
        g2: 0.08,
        r_b: 0.45,
        env_t: 1.2,
    };
    let c = correct_vtpi(&inp).unwrap();
    let v = 1.0 - (0.3 - 0.1) / (0.6 - 0.1);
    let (r, t) = (0.45, 0.55);
    let m = v * ((r * r + t * t) + 2.0 * r * t * 0.08 / 1.2) / (2.0 * r * t);
    assert!((c.m.value - m).abs() < 1e-12);
    assert!(c.flag.is_none());
    assert!(correct_vtpi(&VtpiInputs { r_b: 1.0, ..inp }).is_err());
}

#[test]
fn decay_recovery() {
    let irf = 25.0;
    let model = DecayModel { irf_sigma_ps: irf, bin_ps: 4.0 };
    let truth = [5e7, 201.0, 150.0, 3.0];
    let counts: Vec<u64> = (0..1500).map(|i| model.eval((i as f64 + 0.5) * 4.0, &truth).round() as u64).collect();
    let hist = TcspcHistogram { period_ps: PERIOD, bin_ps: 4, counts };
    let r = fit_decay(&hist, irf).unwrap();
    assert!(r.converged);
    assert!(rel(r.value("tau_ps"), 201.0) < 1e-3, "{}", r.value("tau_ps"));
    assert!(rel(r.value("amplitude"), 5e7) < 1e-3);
    assert!((r.value("t0_ps") - 150.0).abs() < 0.15);
}

#[test]
fn voigt_recovery() {
    let f_l = 0.79;
    let model = VoigtModel { f_l_ghz: f_l };
    let sigma = 1.8605;
    let truth = [1e6, 0.4, sigma, 20.0];
    let scan: Vec<(f64, f64)> = (0..201).map(|i| -15.0 + 0.15 * i as f64).map(|x| (x, model.eval(x, &truth))).collect();
    let r = fit_voigt_fixed_lorentzian(&scan, f_l).unwrap();
    assert!(r.converged);
    assert!(rel(r.value("sigma_g_ghz"), sigma) < 1e-3);
    assert!((r.value("fwhm_ghz") - 4.82).abs() < 0.01);
    assert!((r.value("centre_ghz") - 0.4).abs() < 1e-3);
}

#[test]
fn rabi_recovery() {
    let gamma = -(0.584f64).ln() / PI;
    let truth = [1e5, gamma, 1.7];
    let points: Vec<(f64, f64)> = (1..=40).map(|i| 0.12 * i as f64).map(|x| (x, RabiModel.eval(x, &truth))).collect();
    let r = fit_rabi(&points).unwrap();
    assert!(r.converged);
    assert!(rel(r.value("prep_fidelity"), 0.584) < 1e-3, "{}", r.value("prep_fidelity"));
    assert!(rel(r.value("x_pi"), 1.7) < 1e-3);
    assert!(rel(r.value("pi_power"), 1.7 * 1.7) < 2e-3);
}

#[test]
fn bunching_recovery() {
    let (a1, t1, a2, t2) = (0.45, 65.0, 0.52, 125.0);
    let model = BunchingModel { components: 2 };
    let p = [2e4, a1, t1, a2, t2];
    let mut hist = CorrelationHistogram::empty(PERIOD, 2_000_000_000).unwrap();
    let d = 4e12;
    hist.duration_ps = d as u64;
    let z = hist.zero_bin();
    for i in 0..hist.counts.len() {
        if i == z {
            continue;
        }
        let t = hist.bin_center_ps(i) as f64;
        hist.counts[i] = (model.eval(t * 1e-6, &p) * (d - t.abs()) / d).round() as u64;
    }
    let b = fit_bunching(&hist).unwrap();
    assert!(rel(b.tau_b1_us, t1) < 1e-3, "{b:?}");
    assert!(rel(b.tau_b2_us, t2) < 1e-3);
    assert!(rel(b.a1, a1) < 1e-3);
    assert!(rel(b.a2, a2) < 1e-3);
    assert!(rel(b.beta, 1.0 / (1.0 + a1 + a2)) < 1e-4);
    assert!(rel(b.p_inf, 2e4) < 1e-3);
}

#[test]
fn comb_recovery() {
    let model = PeakCombModel { envelope: [1.0; 2 * COMB_HALF_PEAKS + 1], ..comb_model() };
    let truth = [40.0, 8e4, 1e6, 1e6, 1e6, 1e6, 1e6];
    let mut hist = CorrelationHistogram::empty(16, 7 * PERIOD).unwrap();
    for i in 0..hist.counts.len() {
        hist.counts[i] = model.eval(hist.bin_center_ps(i) as f64, &truth).round() as u64;
    }
    let fit = fit_g2_background(&hist, 25.0, PERIOD, 201.0, None).unwrap();
    assert!(fit.fit.converged);
    assert!((fit.g2_bgc.value - 0.08).abs() < 1e-4, "{}", fit.g2_bgc.value);
    assert!(rel(fit.floor_per_bin, 40.0) < 1e-3);
    let f = 40.0 * PERIOD as f64 / 16.0;
    assert!(rel(fit.floor_fraction, f / (1e6 + f)) < 1e-3);
}

#[test]
fn fitter_recovers_from_a_perturbed_start() {
    let xs: Vec<f64> = (0..300).map(|i| -200.0 + 5.0 * i as f64).collect();
    let model = DecayModel { irf_sigma_ps: 30.0, bin_ps: 5.0 };
    let truth = [1e5, 180.0, 0.0, 2.0];
    let ys: Vec<f64> = xs.iter().map(|&x| model.eval(x, &truth)).collect();
    let sig = vec![1.0; xs.len()];
    let out = levenberg_marquardt(&model, &xs, &ys, &sig, &[7e4, 250.0, 40.0, 5.0], &FitOptions::unbounded(4)).unwrap();
    assert!(out.converged);
    for (p, t) in out.params.iter().zip(&truth) {
        assert!((p - t).abs() <= 1e-6 * t.abs().max(1.0), "{:?}", out.params);
    }
    assert!(out.chi2 < 1e-6);
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let xs: Vec<f64> = (-60..=60).map(|i| 7.3 * i as f64).collect();
    check_gradient(&DecayModel { irf_sigma_ps: 25.0, bin_ps: 4.0 }, &xs, &[5e4, 201.0, 30.0, 2.0]);
    check_gradient(&DecayModel { irf_sigma_ps: 0.0, bin_ps: 4.0 }, &xs.iter().map(|x| x.abs() + 50.0).collect::<Vec<_>>(), &[5e4, 201.0, 30.0, 2.0]);

    let ghz: Vec<f64> = (-40..=40).map(|i| 0.31 * i as f64).collect();
    check_gradient(&VoigtModel { f_l_ghz: 0.79 }, &ghz, &[1e4, 0.3, 1.86, 5.0]);

    let root_power: Vec<f64> = (1..=40).map(|i| 0.1 * i as f64 + 0.013).collect();
    check_gradient(&RabiModel, &root_power, &[1e5, 0.17, 1.7]);

    let us: Vec<f64> = (-50..=50).map(|i| 9.1 * i as f64 + 0.05).collect();
    check_gradient(&BunchingModel { components: 1 }, &us, &[1e3, 0.9, 80.0]);
    check_gradient(&BunchingModel { components: 2 }, &us, &[1e3, 0.45, 65.0, 0.5, 125.0]);

    let delays: Vec<f64> = (-300..=300).map(|i| 127.0 * i as f64 + 3.0).collect();
    check_gradient(&comb_model(), &delays, &[40.0, 8e4, 9e5, 1.1e6, 1e6, 9.5e5, 1e6]);
}

#[test]
fn ensemble_statistics_examples() {
    let s = ensemble_stats(&[1.0, 2.0, 3.0, 4.0], 3).unwrap();
    assert_eq!(s.n, 4);
    assert_eq!(s.mean, 2.5);
    assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(s.histogram.edges.len(), 4);
    assert_eq!(s.histogram.edges[0], 1.0);
    assert_eq!(*s.histogram.edges.last().unwrap(), 4.0);
    assert_eq!(s.histogram.counts, vec![1, 1, 2]);

    let s = ensemble_stats(&[0.3, 0.3], 5).unwrap();
    assert_eq!(s.std, 0.0);
    assert_eq!(s.histogram.counts.iter().sum::<u64>(), 2);
    assert!(ensemble_stats(&[1.0], 2).is_err());
    assert!(ensemble_stats(&[1.0, f64::NAN], 2).is_err());
}
