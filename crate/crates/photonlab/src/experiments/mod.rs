//! Simulated measurements: emitter, circuit, detectors, then the same analysis
//! chain that runs on recorded tags.
//!
//! Each scenario is split into a simulation step producing tags (or scan points)
//! and an `analyze_*` step that only sees those, so external data go through the
//! identical path.

mod correlation;
mod ensemble;
mod scans;

use serde::{Deserialize, Serialize};

use photonlab_core::{CircuitConfig, DetectorConfig, EmitterConfig};

use crate::presets::{apd_detector, BlinkingSpec, tcspc_detector, ExpectedValues, QdPreset};
use crate::report::{ExperimentReport, Scenario};

pub use correlation::{
    analyze_hbt, analyze_hbt_run, analyze_hom, analyze_hom_runs, analyze_tcspc, analyze_tcspc_run, run_hbt, run_hom, run_tcspc, simulate_hbt, simulate_hom, simulate_tcspc,
    AnalysisInputs, CorrelationSettings, HomSettings, HomTags, PolSelection, TcspcSettings,
};
pub use ensemble::{run_ensemble, EnsembleQuantity, EnsembleSettings};
pub use scans::{analyze_fpi, analyze_rabi, run_fpi, run_rabi, simulate_fpi, simulate_rabi, FpiSettings, RabiSettings};

/// Source, circuit and detectors of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setup {
    /// Preset the setup was built from.
    #[serde(default)]
    pub preset: Option<String>,
    pub emitter: EmitterConfig,
    /// When set, replaces `emitter.blink` with the rates inverted from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blinking: Option<BlinkingSpec>,
    pub circuit: CircuitConfig,
    /// Detectors of the correlation setups.
    #[serde(default = "apd_detector")]
    pub detector: DetectorConfig,
    /// Detector of the lifetime measurement.
    #[serde(default = "tcspc_detector")]
    pub tcspc_detector: DetectorConfig,
    /// Measured values to compare against; only set for unmodified presets.
    #[serde(skip)]
    pub expected: Option<ExpectedValues>,
}

impl Setup {
    pub fn from_preset(p: &QdPreset) -> Self {
        Self {
            preset: Some(p.name.clone()),
            emitter: p.emitter.clone(),
            blinking: Some(p.blinking),
            circuit: p.circuit.clone(),
            detector: apd_detector(),
            tcspc_detector: tcspc_detector(),
            expected: Some(p.expected.clone()),
        }
    }

    /// Drop the reference values, for setups modified after loading a preset.
    pub fn without_expected(mut self) -> Self {
        self.expected = None;
        self
    }

    /// Invert `blinking`, if given, into the emitter's rates.
    pub fn apply_blinking(&mut self) -> crate::Result<()> {
        if let Some(b) = &self.blinking {
            self.emitter.blink = b.rates().map_err(|e| crate::Error::Config(format!("setup.blinking: {e}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.emitter.validate()?;
        self.circuit.validate()?;
        self.detector.validate()?;
        self.tcspc_detector.validate()?;
        Ok(())
    }

    pub(crate) fn report(&self, scenario: Scenario, seed: u64, n_pulses: u64, settings: &impl Serialize) -> ExperimentReport {
        let config = serde_json::json!({ "setup": self, "settings": settings });
        ExperimentReport::new(scenario, self.preset.clone(), seed, n_pulses, config)
    }
}

/// Seed of an independent second run derived from `seed`.
pub(crate) fn derived_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
