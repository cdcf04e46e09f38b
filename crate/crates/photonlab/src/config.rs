//! TOML run configuration.
//!
//! ```toml
//! version = 1
//! scenario = "hom"
//! preset = "qd1"
//! seed = 7
//! n_pulses = 100000000
//!
//! [hom]
//! pol = "both"
//! ```
//!
//! A `[setup]` table replaces the preset's source, circuit and detectors;
//! setups differing from the named preset are not compared with its measured
//! values. An optional `[setup.blinking]` table (`on_fraction`, `tau1_us`,
//! `tau2_us`, `split`) takes precedence over the raw `[setup.emitter.blink]`
//! rates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiments::{
    CorrelationSettings, EnsembleSettings, FpiSettings, HomSettings, RabiSettings, Setup, TcspcSettings,
};
use crate::presets::QdPreset;
use crate::report::Scenario;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "config_version")]
    pub version: u32,
    pub scenario: Scenario,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pulses")]
    pub n_pulses: u64,
    /// Output directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub emit_tags: bool,
    #[serde(default)]
    pub setup: Option<Setup>,
    #[serde(default)]
    pub hbt: CorrelationSettings,
    #[serde(default)]
    pub hom: HomSettings,
    #[serde(default)]
    pub tcspc: TcspcSettings,
    #[serde(default)]
    pub fpi: FpiSettings,
    #[serde(default)]
    pub rabi: RabiSettings,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
}

fn config_version() -> u32 {
    CONFIG_VERSION
}

fn default_pulses() -> u64 {
    100_000_000
}

impl RunConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            version: CONFIG_VERSION,
            scenario,
            preset: None,
            seed: 0,
            n_pulses: default_pulses(),
            out: None,
            emit_tags: false,
            setup: None,
            hbt: CorrelationSettings::default(),
            hom: HomSettings::default(),
            tcspc: TcspcSettings::default(),
            fpi: FpiSettings::default(),
            rabi: RabiSettings::default(),
            ensemble: EnsembleSettings::default(),
        }
    }

    /// Every field at its default, with the setup of `preset` spelled out.
    pub fn defaults(scenario: Scenario, preset: &str) -> Result<Self> {
        let p = QdPreset::by_name(preset)?;
        let mut c = Self::new(scenario);
        c.preset = Some(p.name.clone());
        c.setup = Some(Setup::from_preset(&p));
        Ok(c)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {} (expected {CONFIG_VERSION})", c.version)));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    /// The setup to simulate: the inline `[setup]` if present, else the preset.
    /// Reference values are kept only when the setup equals its preset.
    pub fn resolve_setup(&self) -> Result<Setup> {
        let preset = self.preset.as_deref().map(QdPreset::by_name).transpose()?;
        match (&self.setup, preset) {
            (None, Some(p)) => Ok(Setup::from_preset(&p)),
            (None, None) => match self.scenario {
                Scenario::Ensemble => Ok(Setup::from_preset(&QdPreset::qd1()).without_expected()),
                s => Err(Error::Usage(format!("scenario `{s}` needs a preset or a [setup] table"))),
            },
            (Some(s), p) => {
                let mut s = s.clone();
                s.expected = None;
                s.apply_blinking()?;
                if let Some(p) = p {
                    let reference = Setup::from_preset(&p);
                    if same_hardware(&s, &reference) {
                        s.expected = reference.expected;
                    }
                    s.preset = Some(p.name);
                }
                s.validate()?;
                Ok(s)
            }
        }
    }
}

fn same_hardware(a: &Setup, b: &Setup) -> bool {
    a.emitter == b.emitter && a.circuit == b.circuit && a.detector == b.detector && a.tcspc_detector == b.tcspc_detector
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::defaults(Scenario::Hbt, "qd2").unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        assert!(back.resolve_setup().unwrap().expected.is_some());
    }

    #[test]
    fn unknown_keys_are_located() {
        let e = RunConfig::from_toml("scenario = \"hbt\"\npreset = \"qd1\"\n\n[hbt]\nfine_bin = 30\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("fine_bin") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn modified_setup_drops_reference_values() {
        let mut c = RunConfig::defaults(Scenario::Tcspc, "qd1").unwrap();
        c.setup.as_mut().unwrap().emitter.tau_ps = 300.0;
        assert!(c.resolve_setup().unwrap().expected.is_none());
    }

    #[test]
    fn blinking_table_sets_the_rates() {
        let mut c = RunConfig::defaults(Scenario::Hbt, "qd1").unwrap();
        assert!(c.resolve_setup().unwrap().expected.is_some());
        let b = c.setup.as_mut().unwrap().blinking.as_mut().unwrap();
        b.split = 0.3;
        let want = b.rates().unwrap();
        let s = RunConfig::from_toml(&c.to_toml()).unwrap().resolve_setup().unwrap();
        assert_eq!(s.emitter.blink, want);
        assert!(s.expected.is_none());
        c.setup.as_mut().unwrap().blinking.as_mut().unwrap().split = 2.0;
        assert_eq!(c.resolve_setup().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn correlation_scenarios_need_a_source() {
        let c = RunConfig::new(Scenario::Hbt);
        assert_eq!(c.resolve_setup().unwrap_err().exit_code(), 1);
    }
}
