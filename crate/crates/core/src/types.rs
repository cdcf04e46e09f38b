use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TimeTag {
    /// Picoseconds since run start; always below 2^63.
    pub time_ps: u64,
    pub channel: u8,
}

impl TimeTag {
    pub const MAX_TIME_PS: u64 = (1 << 63) - 1;

    pub fn new(channel: u8, time_ps: u64) -> Self {
        Self { time_ps, channel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn rotated(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

/// Provenance of a wave packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Origin {
    Signal,
    Reexcitation,
    StrayPulsed,
    StrayCw,
}

impl Origin {
    pub fn is_stray(self) -> bool {
        matches!(self, Origin::StrayPulsed | Origin::StrayCw)
    }
}

/// An emitted single-photon wave packet with an exponentially decaying envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPacket {
    /// Wave-packet start, ps.
    pub t0_ps: u64,
    /// Intensity decay constant, ps.
    pub tau_ps: f64,
    /// Centre-frequency offset from the reference, GHz.
    pub detuning_ghz: f64,
    pub polarization: Polarization,
    pub origin: Origin,
}

/// Rates of the three-state blinking chain (ON, OFF_A, OFF_B), in 1/µs.
///
/// Transitions only connect ON with either OFF state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct BlinkRates {
    pub k_on_a: f64,
    pub k_off_a: f64,
    pub k_on_b: f64,
    pub k_off_b: f64,
}

impl BlinkRates {
    /// A source that never blinks.
    pub const NONE: BlinkRates = BlinkRates { k_on_a: 0.0, k_off_a: 0.0, k_on_b: 0.0, k_off_b: 0.0 };

    pub fn validate(&self) -> Result<()> {
        let all = [self.k_on_a, self.k_off_a, self.k_on_b, self.k_off_b];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config("blink rates must be finite and non-negative"));
        }
        if (self.k_off_a > 0.0 && self.k_on_a == 0.0) || (self.k_off_b > 0.0 && self.k_on_b == 0.0) {
            return Err(Error::Config("an OFF state with no return rate absorbs the emitter"));
        }
        Ok(())
    }
}

/// Stochastic emitter parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct EmitterConfig {
    pub tau_ps: f64,
    /// Excitation probability of a pi pulse.
    pub prep_fidelity: f64,
    /// Probability of a second excitation within the same pulse, per unit fidelity.
    pub p_reexcite: f64,
    /// Standard deviation of the spectral-diffusion detuning, GHz.
    pub sigma_g_ghz: f64,
    /// Correlation time of the spectral diffusion, µs.
    pub ou_tc_us: f64,
    pub blink: BlinkRates,
    pub wavelength_nm: f64,
    /// Probability that an emitted photon is captured by the waveguide mode.
    pub collection_efficiency: f64,
    /// Pulse area of the drive, radians (pi for pi-pulse operation).
    pub pulse_area_rad: f64,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        Self {
            tau_ps: 201.0,
            prep_fidelity: 1.0,
            p_reexcite: 0.0,
            sigma_g_ghz: 0.0,
            ou_tc_us: 10.0,
            blink: BlinkRates::NONE,
            wavelength_nm: 781.71,
            collection_efficiency: 1.0,
            pulse_area_rad: core::f64::consts::PI,
        }
    }
}

impl EmitterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_ps.is_finite() && self.tau_ps > 0.0) {
            return Err(Error::Config("tau_ps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.prep_fidelity) {
            return Err(Error::Config("prep_fidelity must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.p_reexcite) {
            return Err(Error::Config("p_reexcite must lie in [0, 1)"));
        }
        if !(self.sigma_g_ghz.is_finite() && self.sigma_g_ghz >= 0.0) {
            return Err(Error::Config("sigma_g_ghz must be non-negative"));
        }
        if !(self.ou_tc_us.is_finite() && self.ou_tc_us > 0.0) {
            return Err(Error::Config("ou_tc_us must be positive"));
        }
        if !(0.0..=1.0).contains(&self.collection_efficiency) {
            return Err(Error::Config("collection_efficiency must lie in [0, 1]"));
        }
        if !(self.pulse_area_rad.is_finite() && self.pulse_area_rad >= 0.0) {
            return Err(Error::Config("pulse_area_rad must be non-negative"));
        }
        self.blink.validate()
    }
}

/// Relative polarization of the two interferometer arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum PolConfig {
    #[default]
    Co,
    Cross,
}

/// Photonic circuit and excitation-laser parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct CircuitConfig {
    pub rep_period_ps: u64,
    pub mmi_ratio: f64,
    pub mmi_transmission: f64,
    pub fiber_bs_ratio: f64,
    pub delay_ps: u64,
    pub attenuation_db_per_mm: f64,
    pub path_length_mm: f64,
    /// Mean laser stray photons per pulse in the collected waveguide mode.
    pub stray_pulsed_rate: f64,
    /// Rate of continuous-wave laser background in the collected mode, Hz.
    pub stray_cw_rate_hz: f64,
    pub pol_config: PolConfig,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            rep_period_ps: 6570,
            mmi_ratio: 0.5,
            mmi_transmission: 1.0,
            fiber_bs_ratio: 0.5,
            delay_ps: 6570,
            attenuation_db_per_mm: 0.0,
            path_length_mm: 0.0,
            stray_pulsed_rate: 0.0,
            stray_cw_rate_hz: 0.0,
            pol_config: PolConfig::Co,
        }
    }
}

impl CircuitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rep_period_ps == 0 {
            return Err(Error::Config("rep_period_ps must be positive"));
        }
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.mmi_ratio) || !unit(self.fiber_bs_ratio) {
            return Err(Error::Config("splitting ratios must lie in (0, 1)"));
        }
        if !(self.mmi_transmission > 0.0 && self.mmi_transmission <= 1.0) {
            return Err(Error::Config("mmi_transmission must lie in (0, 1]"));
        }
        let non_neg = [
            self.attenuation_db_per_mm,
            self.path_length_mm,
            self.stray_pulsed_rate,
            self.stray_cw_rate_hz,
        ];
        if non_neg.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("lengths and rates must be non-negative"));
        }
        Ok(())
    }

    /// Mean number of CW stray photons per repetition period.
    pub fn stray_cw_per_period(&self) -> f64 {
        self.stray_cw_rate_hz * self.rep_period_ps as f64 * 1e-12
    }
}

/// Single-photon detector model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct DetectorConfig {
    /// Standard deviation of the Gaussian timing jitter, ps.
    pub irf_sigma_ps: f64,
    pub dark_rate_hz: f64,
    pub dead_time_ps: u64,
    pub efficiency: f64,
    /// Fixed cable and electronics delay added to every tag, ps.
    pub offset_ps: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { irf_sigma_ps: 0.0, dark_rate_hz: 0.0, dead_time_ps: 0, efficiency: 1.0, offset_ps: 0 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.irf_sigma_ps.is_finite() && self.irf_sigma_ps >= 0.0) {
            return Err(Error::Config("irf_sigma_ps must be non-negative"));
        }
        if !(self.dark_rate_hz.is_finite() && self.dark_rate_hz >= 0.0) {
            return Err(Error::Config("dark_rate_hz must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Config("efficiency must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A fitted parameter with its 1-sigma uncertainty.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FitParam {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(deserialize_with = "nan_from_null"))]
    pub value: f64,
    #[cfg_attr(feature = "serde", serde(deserialize_with = "nan_from_null"))]
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FitResult {
    pub params: Vec<FitParam>,
    #[cfg_attr(feature = "serde", serde(deserialize_with = "nan_from_null"))]
    pub chi2_reduced: f64,
    pub converged: bool,
    pub n_points: usize,
    pub iterations: usize,
    /// Why the fit is not trustworthy, when it is not.
    pub flag: Option<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter, NaN if absent.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn error(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.error)
    }

    pub(crate) fn push(&mut self, name: &str, value: f64, error: f64) {
        self.params.push(FitParam { name: name.into(), value, error });
    }
}

/// Reads a float written by a JSON serializer, which stores non-finite values
/// as `null`; `null` comes back as NaN.
#[cfg(feature = "serde")]
pub fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> core::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}
