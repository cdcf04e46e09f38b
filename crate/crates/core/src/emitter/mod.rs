//! Stochastic model of a pi-pulse driven neutral exciton.
//!
//! A [`PhotonSource`] walks the blinking chain in continuous time and, inside ON
//! intervals, skips geometrically from one emitting pulse to the next, so the cost
//! scales with the number of collected photons rather than with the number of
//! pulses. The spectral-diffusion detuning is advanced lazily with the exact OU
//! transition kernel, only at emission instants.
//!
//! Pulses are grouped into segments of [`SEGMENT_PULSES`]; each segment draws from
//! its own random stream and the emitter state is checkpointed between segments.

mod blink;
mod spectral;

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Geometric, Poisson, StandardNormal};

use crate::rng::{self, Purpose, StreamRng};
use crate::{CircuitConfig, EmitterConfig, Error, Origin, PhotonPacket, Polarization, Result};

pub use blink::{step_blinking, BlinkLevel, BlinkState, BunchingShape};
pub use spectral::{step_spectral, SpectralState};

/// Pulses per random-stream segment.
pub const SEGMENT_PULSES: u64 = 1 << 20;
/// Decay constant assigned to laser stray-light packets, ps.
pub const STRAY_TAU_PS: f64 = 10.0;
/// Polarization of the single dipole that couples to the TE waveguide mode.
pub const EMITTER_POLARIZATION: Polarization = Polarization::H;

const INIT_STREAM: u64 = (1 << 48) - 1;

/// Damping rate (per radian of pulse area) that leaves excitation probability
/// `prep_fidelity` at a pi pulse.
pub fn rabi_damping(prep_fidelity: f64) -> f64 {
    if prep_fidelity <= 0.0 {
        f64::INFINITY
    } else {
        -prep_fidelity.ln() / PI
    }
}

/// Excitation probability after a pulse of area `pulse_area_rad`:
/// `exp(-gamma theta) sin^2(theta / 2)`.
pub fn rabi_excitation_prob(pulse_area_rad: f64, prep_fidelity: f64) -> f64 {
    let theta = pulse_area_rad.max(0.0);
    if theta == 0.0 {
        return 0.0;
    }
    let gamma = rabi_damping(prep_fidelity);
    if gamma.is_infinite() {
        return 0.0;
    }
    let s = (0.5 * theta).sin();
    (-gamma * theta).exp() * s * s
}

/// Checkpoint of everything that carries over between segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterState {
    pub level: BlinkLevel,
    /// Absolute time of the next blinking transition, ps.
    pub next_switch_ps: f64,
    pub spectral: SpectralState,
    /// Time at which `spectral` was last evaluated, ps.
    pub spectral_at_ps: f64,
}

/// Pulse range and time span covered by one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub index: u64,
    pub first_pulse: u64,
    pub n_pulses: u64,
    pub start_ps: u64,
    pub end_ps: u64,
}

/// Segment-by-segment photon generator for a pulse train of fixed length.
#[derive(Debug, Clone)]
pub struct PhotonSource {
    cfg: EmitterConfig,
    period_ps: u64,
    stray_pulsed_rate: f64,
    stray_cw_per_ps: f64,
    n_pulses: u64,
    seed: u64,
    state: EmitterState,
    next_index: u64,
    p_excite: f64,
    p_event: f64,
    p_first_given_event: f64,
    p_second_with_first: f64,
}

impl PhotonSource {
    pub fn new(emitter: &EmitterConfig, circuit: &CircuitConfig, n_pulses: u64, seed: u64) -> Result<Self> {
        emitter.validate()?;
        circuit.validate()?;
        if n_pulses == 0 {
            return Err(Error::Domain("pulse train needs at least one pulse"));
        }
        let mut init = rng::stream(seed, Purpose::Emitter, INIT_STREAM);
        let level = blink::stationary_level(&emitter.blink, &mut init);
        let next_switch_ps = blink::holding_time(level, &emitter.blink, &mut init);
        let n: f64 = StandardNormal.sample(&mut init);
        let state = EmitterState {
            level,
            next_switch_ps,
            spectral: SpectralState { detuning_ghz: emitter.sigma_g_ghz * n },
            spectral_at_ps: 0.0,
        };

        let eta = emitter.collection_efficiency;
        let p_excite = rabi_excitation_prob(emitter.pulse_area_rad, emitter.prep_fidelity);
        let q = emitter.p_reexcite * p_excite;
        let p_any = 1.0 - (1.0 - eta) * (1.0 - q * eta);
        Ok(Self {
            cfg: emitter.clone(),
            period_ps: circuit.rep_period_ps,
            stray_pulsed_rate: circuit.stray_pulsed_rate,
            stray_cw_per_ps: circuit.stray_cw_rate_hz * 1e-12,
            n_pulses,
            seed,
            state,
            next_index: 0,
            p_excite,
            p_event: p_excite * p_any,
            p_first_given_event: if p_any > 0.0 { eta / p_any } else { 0.0 },
            p_second_with_first: q * eta,
        })
    }

    /// Continue a run from a checkpoint taken before segment `next_segment`.
    pub fn resume(
        emitter: &EmitterConfig,
        circuit: &CircuitConfig,
        n_pulses: u64,
        seed: u64,
        state: EmitterState,
        next_segment: u64,
    ) -> Result<Self> {
        let mut src = Self::new(emitter, circuit, n_pulses, seed)?;
        src.state = state;
        src.next_index = next_segment;
        Ok(src)
    }

    pub fn state(&self) -> EmitterState {
        self.state
    }

    pub fn next_segment_index(&self) -> u64 {
        self.next_index
    }

    pub fn n_segments(&self) -> u64 {
        self.n_pulses.div_ceil(SEGMENT_PULSES)
    }

    pub fn n_pulses(&self) -> u64 {
        self.n_pulses
    }

    /// Probability that an ON pulse excites the emitter.
    pub fn excitation_prob(&self) -> f64 {
        self.p_excite
    }

    pub fn duration_ps(&self) -> u64 {
        self.n_pulses * self.period_ps
    }

    fn take_segment(&mut self) -> Option<Segment> {
        if self.next_index >= self.n_segments() {
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;
        let first_pulse = index * SEGMENT_PULSES;
        let n_pulses = SEGMENT_PULSES.min(self.n_pulses - first_pulse);
        Some(Segment {
            index,
            first_pulse,
            n_pulses,
            start_ps: first_pulse * self.period_ps,
            end_ps: (first_pulse + n_pulses) * self.period_ps,
        })
    }

    /// Visit every run of consecutive ON pulses `[k_lo, k_hi)` inside `seg`.
    fn walk_on_pulses<F>(&mut self, seg: &Segment, rng: &mut StreamRng, mut visit: F)
    where
        F: FnMut(&mut EmitterState, u64, u64, &mut StreamRng),
    {
        let period = self.period_ps as f64;
        let t_end = seg.end_ps as f64;
        let mut cur = seg.start_ps as f64;
        while cur < t_end {
            let stop = self.state.next_switch_ps.min(t_end);
            if self.state.level == BlinkLevel::On {
                let k_lo = ((cur / period).ceil() as u64).max(seg.first_pulse);
                let k_hi = ((stop / period).ceil() as u64).min(seg.first_pulse + seg.n_pulses);
                if k_lo < k_hi {
                    visit(&mut self.state, k_lo, k_hi, rng);
                }
            }
            if self.state.next_switch_ps < t_end {
                let level = blink::next_level(self.state.level, &self.cfg.blink, rng);
                self.state.level = level;
                self.state.next_switch_ps += blink::holding_time(level, &self.cfg.blink, rng);
            }
            cur = stop;
        }
    }

    /// Generate the next segment's packets (signal and stray), time-sorted, into
    /// `out` (which is cleared first).
    pub fn next_segment(&mut self, out: &mut Vec<PhotonPacket>) -> Option<Segment> {
        out.clear();
        let seg = self.take_segment()?;
        let mut rng = rng::stream(self.seed, Purpose::Emitter, seg.index);

        if self.p_event > 0.0 {
            let geo = Geometric::new(self.p_event).expect("probability in (0, 1]");
            let period = self.period_ps;
            let (tau, sigma, tc) = (self.cfg.tau_ps, self.cfg.sigma_g_ghz, self.cfg.ou_tc_us);
            let (p_first, p_second) = (self.p_first_given_event, self.p_second_with_first);
            self.walk_on_pulses(&seg, &mut rng, |state, k_lo, k_hi, rng| {
                let mut k = k_lo.saturating_add(geo.sample(rng));
                while k < k_hi {
                    let t0 = k * period;
                    let t = t0 as f64;
                    state.spectral = step_spectral(state.spectral, t - state.spectral_at_ps, sigma, tc, rng);
                    state.spectral_at_ps = t;
                    let (first, second) = if rng.random::<f64>() < p_first {
                        (true, rng.random::<f64>() < p_second)
                    } else {
                        (false, true)
                    };
                    let packet = |t0_ps, origin| PhotonPacket {
                        t0_ps,
                        tau_ps: tau,
                        detuning_ghz: state.spectral.detuning_ghz,
                        polarization: EMITTER_POLARIZATION,
                        origin,
                    };
                    if first {
                        out.push(packet(t0, Origin::Signal));
                    }
                    if second {
                        let lifetime: f64 = Exp1.sample(rng);
                        out.push(packet(t0 + (lifetime * tau).round() as u64, Origin::Reexcitation));
                    }
                    k = k.saturating_add(1).saturating_add(geo.sample(rng));
                }
            });
        }

        self.push_stray(&seg, out);
        out.sort_by_key(|p| p.t0_ps);
        Some(seg)
    }

    fn push_stray(&self, seg: &Segment, out: &mut Vec<PhotonPacket>) {
        let mut rng = rng::stream(self.seed, Purpose::Stray, seg.index);
        let stray = |t0_ps, origin| PhotonPacket {
            t0_ps,
            tau_ps: STRAY_TAU_PS,
            detuning_ghz: 0.0,
            polarization: EMITTER_POLARIZATION,
            origin,
        };
        for k in poisson_count(self.stray_pulsed_rate * seg.n_pulses as f64, &mut rng) {
            let _ = k;
            let pulse = seg.first_pulse + rng.random_range(0..seg.n_pulses);
            out.push(stray(pulse * self.period_ps, Origin::StrayPulsed));
        }
        let span = seg.end_ps - seg.start_ps;
        for _ in poisson_count(self.stray_cw_per_ps * span as f64, &mut rng) {
            out.push(stray(seg.start_ps + rng.random_range(0..span), Origin::StrayCw));
        }
    }

    /// Collected-photon count of the next segment without materialising packets
    /// (binomial per ON interval; stray light excluded).
    pub fn count_next_segment(&mut self) -> Option<(Segment, u64)> {
        let seg = self.take_segment()?;
        let mut rng = rng::stream(self.seed, Purpose::Emitter, seg.index);
        let eta = self.cfg.collection_efficiency;
        let p1 = self.p_excite * eta;
        let p2 = self.p_excite * self.cfg.p_reexcite * self.p_excite * eta;
        let mut count = 0u64;
        self.walk_on_pulses(&seg, &mut rng, |_, k_lo, k_hi, rng| {
            let n = k_hi - k_lo;
            for p in [p1, p2] {
                if p > 0.0 {
                    count += Binomial::new(n, p.min(1.0)).expect("valid binomial").sample(rng);
                }
            }
        });
        Some((seg, count))
    }
}

/// Iterator of length Poisson(`mean`).
fn poisson_count(mean: f64, rng: &mut StreamRng) -> core::ops::Range<u64> {
    if mean <= 0.0 {
        return 0..0;
    }
    let n: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    0..n as u64
}

/// Whole pulse train as one time-sorted packet list.
pub fn emit_pulse_train(
    emitter: &EmitterConfig,
    circuit: &CircuitConfig,
    n_pulses: u64,
    seed: u64,
) -> Result<Vec<PhotonPacket>> {
    let mut src = PhotonSource::new(emitter, circuit, n_pulses, seed)?;
    let mut all = Vec::new();
    let mut buf = Vec::new();
    while src.next_segment(&mut buf).is_some() {
        all.extend_from_slice(&buf);
    }
    Ok(all)
}
