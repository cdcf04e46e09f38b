//! Ornstein–Uhlenbeck spectral diffusion of the emission frequency.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectralState {
    pub detuning_ghz: f64,
}

/// Exact OU update over `dt_ps`: the stationary law is N(0, sigma^2) and the
/// autocorrelation decays as `exp(-dt / t_c)`.
pub fn step_spectral<R: Rng + ?Sized>(
    state: SpectralState,
    dt_ps: f64,
    sigma_g_ghz: f64,
    tc_us: f64,
    rng: &mut R,
) -> SpectralState {
    if sigma_g_ghz == 0.0 {
        return SpectralState { detuning_ghz: 0.0 };
    }
    let x = -dt_ps / (tc_us * 1e6);
    let keep = x.exp();
    let spread = sigma_g_ghz * (-(2.0 * x).exp_m1()).sqrt();
    let n: f64 = StandardNormal.sample(rng);
    SpectralState { detuning_ghz: state.detuning_ghz * keep + spread * n }
}
