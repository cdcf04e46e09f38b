//! Experiment reports and the data series behind their plots.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use photonlab_core::types::nan_from_null;
use photonlab_core::FitResult;

use crate::presets::Expected;

/// Version of the report JSON layout, bumped on incompatible changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON schema matching [`REPORT_SCHEMA_VERSION`].
pub const REPORT_SCHEMA: &str = include_str!("../schema/report-v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Hbt,
    Hom,
    Tcspc,
    Fpi,
    Rabi,
    Ensemble,
}

impl Scenario {
    pub const ALL: [Scenario; 6] =
        [Scenario::Hbt, Scenario::Hom, Scenario::Tcspc, Scenario::Fpi, Scenario::Rabi, Scenario::Ensemble];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Hbt => "hbt",
            Scenario::Hom => "hom",
            Scenario::Tcspc => "tcspc",
            Scenario::Fpi => "fpi",
            Scenario::Rabi => "rabi",
            Scenario::Ensemble => "ensemble",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    #[serde(deserialize_with = "nan_from_null")]
    pub value: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub error: f64,
}

impl Metric {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }
}

/// Comparison of one metric with its expected range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub metric: String,
    #[serde(deserialize_with = "nan_from_null")]
    pub measured: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub expected: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Too few events for the extracted metrics to mean much.
    LowStatistics,
    /// A fit required for a headline metric did not converge.
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    /// Preset the configuration came from, if any.
    pub preset: Option<String>,
    pub seed: u64,
    pub n_pulses: u64,
    /// Everything needed to rerun the experiment.
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, Metric>,
    pub checks: Vec<Check>,
    pub status: Status,
    pub flags: Vec<String>,
    pub fits: BTreeMap<String, FitResult>,
    /// Files written next to the report, relative to it.
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn new(scenario: Scenario, preset: Option<String>, seed: u64, n_pulses: u64, config: serde_json::Value) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario,
            preset,
            seed,
            n_pulses,
            config,
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            status: Status::Ok,
            flags: Vec::new(),
            fits: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<Metric> {
        self.metrics.get(name).copied()
    }

    /// Value of a metric, NaN if absent.
    pub fn value(&self, name: &str) -> f64 {
        self.metric(name).map_or(f64::NAN, |m| m.value)
    }

    pub fn set(&mut self, name: &str, m: Metric) {
        self.metrics.insert(name.to_string(), m);
    }

    pub fn flag(&mut self, msg: impl Into<String>) {
        self.flags.push(msg.into());
    }

    pub fn fit_failed(&mut self, what: &str, why: impl fmt::Display) {
        self.flag(format!("{what}: {why}"));
        if self.status == Status::Ok {
            self.status = Status::NotConverged;
        }
    }

    pub fn check(&mut self, metric: &str, expected: &Expected) {
        let measured = self.value(metric);
        self.checks.push(Check {
            metric: metric.to_string(),
            measured,
            expected: expected.value,
            tolerance: expected.tolerance,
            pass: expected.accepts(measured),
        });
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// SHA-256 of the canonical JSON, for reproducibility checks.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// A plotted data set with an optional model overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// File stem of the CSV and SVG artifacts.
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    pub model: Vec<(f64, f64)>,
    /// Draw as bars (histogram) rather than markers.
    pub bars: bool,
}

impl Series {
    pub fn new(name: &str, title: &str, x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
            model: Vec::new(),
            bars: true,
        }
    }

    pub fn with_model(mut self, model: Vec<(f64, f64)>) -> Self {
        self.model = model;
        self
    }

    pub fn markers(mut self) -> Self {
        self.bars = false;
        self
    }
}

/// A report with the series it was computed from.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub series: Vec<Series>,
}

/// Summary columns: metric key and header.
pub const TABLE_COLUMNS: [(&str, &str); 7] = [
    ("tau_ps", "tau (ps)"),
    ("fwhm_ghz", "FWHM (GHz)"),
    ("g2_raw", "g2_raw"),
    ("g2_bgc", "g2_bgc"),
    ("v_raw", "V_raw"),
    ("m", "M"),
    ("prep_fidelity", "prep. fid."),
];

/// Headline metrics of one source, gathered from its reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Preset name, or `custom` for setups without one.
    pub source: String,
    pub scenarios: Vec<Scenario>,
    pub metrics: BTreeMap<String, Metric>,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    /// One row per source, in order of first appearance. A metric reported by
    /// several runs of one source keeps the last value.
    pub fn collect(reports: &[ExperimentReport]) -> Self {
        let mut rows: Vec<SummaryRow> = Vec::new();
        for r in reports.iter().filter(|r| r.scenario != Scenario::Ensemble) {
            let source = r.preset.clone().unwrap_or_else(|| "custom".into());
            let i = match rows.iter().position(|row| row.source == source) {
                Some(i) => i,
                None => {
                    rows.push(SummaryRow { source, scenarios: Vec::new(), metrics: BTreeMap::new(), failed_checks: Vec::new() });
                    rows.len() - 1
                }
            };
            let row = &mut rows[i];
            if !row.scenarios.contains(&r.scenario) {
                row.scenarios.push(r.scenario);
            }
            for (key, _) in TABLE_COLUMNS {
                if let Some(m) = r.metric(key) {
                    row.metrics.insert(key.into(), m);
                }
            }
            row.failed_checks.extend(r.checks.iter().filter(|c| !c.pass).map(|c| format!("{}:{}", r.scenario, c.metric)));
        }
        Self { schema_version: REPORT_SCHEMA_VERSION, rows }
    }

    /// Plain-text table, one line per source.
    pub fn table(&self) -> String {
        format_table(self.rows.iter().map(|r| (r.source.as_str(), &r.metrics)))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("source");
        for (key, _) in TABLE_COLUMNS {
            out.push_str(&format!(",{key},{key}_err"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.source);
            for (key, _) in TABLE_COLUMNS {
                match r.metrics.get(key) {
                    Some(m) => out.push_str(&format!(",{},{}", m.value, m.error)),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Table of the summary columns for `(label, metrics)` rows; missing entries
/// show as `-`.
pub fn format_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a BTreeMap<String, Metric>)>) -> String {
    let mut lines = vec![{
        let mut h = vec!["source".to_string()];
        h.extend(TABLE_COLUMNS.iter().map(|c| c.1.to_string()));
        h
    }];
    for (label, metrics) in rows {
        let mut l = vec![label.to_string()];
        l.extend(TABLE_COLUMNS.iter().map(|(key, _)| match metrics.get(*key) {
            Some(m) if m.error > 0.0 => format!("{} ± {}", fmt_sig(m.value), fmt_sig(m.error)),
            Some(m) => fmt_sig(m.value),
            None => "-".into(),
        }));
        lines.push(l);
    }
    let widths: Vec<usize> =
        (0..lines[0].len()).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for l in &lines {
        let cells: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn fmt_sig(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if a >= 100.0 {
        format!("{v:.1}")
    } else if a >= 1.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.4}")
    }
}
