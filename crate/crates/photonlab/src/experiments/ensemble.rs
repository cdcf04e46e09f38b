use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use photonlab_core::analysis::ensemble_stats;
use photonlab_core::rng::{self, Purpose};

use crate::presets::Expected;
use crate::report::{ExperimentReport, Metric, Outcome, Scenario, Series};
use crate::{Error, Result};

/// A dot parameter drawn from a normal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleQuantity {
    pub name: String,
    pub unit: String,
    pub mean: f64,
    pub std: f64,
    /// Number of dots sampled.
    pub n: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    10
}

impl EnsembleQuantity {
    pub fn new(name: &str, unit: &str, mean: f64, std: f64, n: usize) -> Self {
        Self { name: name.into(), unit: unit.into(), mean, std, n, bins: default_bins() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSettings {
    pub quantities: Vec<EnsembleQuantity>,
}

impl Default for EnsembleSettings {
    /// The surveyed dot population: emission wavelength over 104 dots, decay
    /// time and linewidth over 25.
    fn default() -> Self {
        Self {
            quantities: vec![
                EnsembleQuantity::new("wavelength", "nm", 781.71, 3.53, 104),
                EnsembleQuantity::new("tau", "ps", 183.0, 22.0, 25),
                EnsembleQuantity::new("linewidth", "GHz", 6.73, 1.77, 25),
            ],
        }
    }
}

/// `n` normal draws, one per equal-probability stratum.
fn stratified_normal<R: Rng>(mean: f64, std: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let dist = Normal::new(mean, std).map_err(|e| Error::Config(format!("normal distribution: {e}")))?;
    Ok((0..n)
        .map(|i| {
            let u: f64 = rng.random();
            dist.inverse_cdf((i as f64 + u) / n as f64)
        })
        .collect())
}

/// Interval holding the sample standard deviation of `n` normal draws with
/// probability 99.73 %.
pub fn sample_std_bounds(std: f64, n: usize) -> (f64, f64) {
    let k = (n - 1) as f64;
    let chi = ChiSquared::new(k).expect("positive degrees of freedom");
    let p = 0.5 * (1.0 - 0.9973);
    (std * (chi.inverse_cdf(p) / k).sqrt(), std * (chi.inverse_cdf(1.0 - p) / k).sqrt())
}

/// Population statistics of dot parameters drawn from the configured normals.
pub fn run_ensemble(set: &EnsembleSettings, seed: u64) -> Result<Outcome> {
    if set.quantities.is_empty() {
        return Err(Error::Config("ensemble needs at least one quantity".into()));
    }
    let config = serde_json::json!({ "settings": set });
    let mut report = ExperimentReport::new(Scenario::Ensemble, None, seed, 0, config);
    let mut series = Vec::new();
    for (qi, q) in set.quantities.iter().enumerate() {
        if q.n < 2 {
            return Err(Error::Config(format!("ensemble `{}` needs at least two dots, got {}", q.name, q.n)));
        }
        if !(q.std > 0.0 && q.mean.is_finite()) {
            return Err(Error::Config(format!("ensemble `{}` needs a finite mean and positive std", q.name)));
        }
        let mut rng = rng::stream(seed, Purpose::Ensemble, qi as u64);
        let values = stratified_normal(q.mean, q.std, q.n, &mut rng)?;
        let stats = ensemble_stats(&values, q.bins)?;
        let se = q.std / (q.n as f64).sqrt();
        report.set(&format!("{}_mean", q.name), Metric::new(stats.mean, stats.std / (q.n as f64).sqrt()));
        report.set(&format!("{}_std", q.name), Metric::exact(stats.std));
        report.set(&format!("{}_n", q.name), Metric::exact(q.n as f64));
        report.check(&format!("{}_mean", q.name), &Expected::new(q.mean, se, se));
        let (lo, hi) = sample_std_bounds(q.std, q.n);
        report.check(&format!("{}_std", q.name), &Expected::new(0.5 * (lo + hi), f64::NAN, 0.5 * (hi - lo)));

        let h = &stats.histogram;
        let width = h.edges[1] - h.edges[0];
        let pts = h.counts.iter().enumerate().map(|(i, &c)| (0.5 * (h.edges[i] + h.edges[i + 1]), c as f64)).collect();
        let normal = Normal::new(q.mean, q.std).expect("validated above");
        let (lo_x, hi_x) = (h.edges[0], h.edges[h.edges.len() - 1]);
        let model = (0..=200)
            .map(|i| lo_x + (hi_x - lo_x) * i as f64 / 200.0)
            .map(|x| (x, q.n as f64 * width * statrs::distribution::Continuous::pdf(&normal, x)))
            .collect();
        series.push(
            Series::new(&format!("ensemble_{}", q.name), &format!("Ensemble {}", q.name), &format!("{} ({})", q.name, q.unit), "dots", pts)
                .with_model(model),
        );
    }
    Ok(Outcome { report, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_bounds_for_25_dots() {
        let (lo, hi) = sample_std_bounds(22.0, 25);
        assert!(lo > 12.0 && lo < 15.0, "{lo}");
        assert!(hi > 29.0 && hi < 32.0, "{hi}");
    }
}
