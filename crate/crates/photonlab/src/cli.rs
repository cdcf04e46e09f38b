//! The `photonlab` command line: `simulate`, `analyze` and `report`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::experiments::{
    analyze_hbt, analyze_hbt_run, analyze_hom, analyze_hom_runs, analyze_tcspc, analyze_tcspc_run, run_ensemble,
    run_fpi, run_rabi, simulate_hbt, simulate_hom, simulate_tcspc, AnalysisInputs, EnsembleSettings, Setup,
};
use crate::io::{interleave, load_tags, save_tags, split_channels};
use crate::parallel::{thread_count, with_threads, THREADS_ENV};
use crate::plot::render_svg;
use crate::report::{format_table, ExperimentReport, Outcome, Scenario, Status, Summary, REPORT_SCHEMA_VERSION};
use crate::{Error, Result};

pub const DEFAULT_OUT: &str = "photonlab-out";

#[derive(Debug, Parser)]
#[command(name = "photonlab", version, about = "Simulate and analyze quantum-dot photon correlation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and analyze the result.
    Simulate(SimulateArgs),
    /// Analyze recorded time tags.
    Analyze(AnalyzeArgs),
    /// Summarize report files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Source preset (qd1, qd2, qd3).
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// hbt, hom, tcspc, fpi, rabi or ensemble.
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "U64")]
    pub n_pulses: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to PHOTONLAB_THREADS, then all cores.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also write the detector time tags.
    #[arg(long)]
    pub emit_tags: bool,
    /// Print the effective configuration with every default and exit.
    #[arg(long)]
    pub dump_defaults: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Tag file (PTAG, or CSV by extension); the co-polarized run for hom.
    #[arg(long, value_name = "PATH")]
    pub tags: Option<PathBuf>,
    /// Cross-polarized tag file for hom.
    #[arg(long, value_name = "PATH")]
    pub cross: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files.
    #[arg(value_name = "REPORT")]
    pub reports: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Parse `args` and run; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    Scenario::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
        Error::Usage(format!("unknown scenario `{s}` (expected one of {})", names.join(", ")))
    })
}

/// Configuration file overridden by command-line flags.
fn effective_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) if !p.exists() => return Err(Error::Usage(format!("config file {} not found", p.display()))),
        Some(p) => RunConfig::load(p)?,
        None => {
            let s = a.scenario.as_deref().ok_or_else(|| Error::Usage("give --config or --scenario".into()))?;
            RunConfig::new(parse_scenario(s)?)
        }
    };
    if let Some(s) = &a.scenario {
        cfg.scenario = parse_scenario(s)?;
    }
    if let Some(p) = &a.preset {
        cfg.preset = Some(p.clone());
        cfg.setup = None;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_pulses {
        cfg.n_pulses = n;
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn threads(a: &RunArgs) -> Result<usize> {
    thread_count(a.threads).map_err(|e| match e {
        Error::Usage(m) => Error::Usage(format!("{m} (--threads or {THREADS_ENV})")),
        e => e,
    })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let mut cfg = effective_config(&a.run)?;
    cfg.emit_tags |= a.emit_tags;
    if a.dump_defaults {
        if cfg.preset.is_none() && cfg.setup.is_none() && cfg.scenario != Scenario::Ensemble {
            cfg.preset = Some("qd1".into());
        }
        if cfg.preset.is_some() || cfg.setup.is_some() {
            cfg.setup = Some(cfg.resolve_setup()?);
        }
        print!("{}", cfg.to_toml());
        return Ok(0);
    }
    let setup = cfg.resolve_setup()?;
    let n = threads(&a.run)?;
    let dir = out_dir(&cfg)?;
    let (outcome, tag_files) = with_threads(n, || simulate(&cfg, &setup, &dir))??;
    finish(outcome, tag_files, &dir)
}

fn simulate(cfg: &RunConfig, setup: &Setup, dir: &Path) -> Result<(Outcome, Vec<String>)> {
    let (seed, n) = (cfg.seed, cfg.n_pulses);
    let mut files = Vec::new();
    let mut emit = |name: &str, tags: &[photonlab_core::TimeTag]| -> Result<()> {
        save_tags(&dir.join(name), tags)?;
        files.push(name.to_string());
        Ok(())
    };
    let outcome = match cfg.scenario {
        Scenario::Hbt => {
            let run = simulate_hbt(setup, n, seed)?;
            if cfg.emit_tags {
                emit("tags.ptag", &interleave(&[&run.tags[0], &run.tags[1]]))?;
            }
            analyze_hbt_run(setup, &run, seed, &cfg.hbt)?
        }
        Scenario::Hom => {
            let runs = simulate_hom(setup, cfg.hom.pol, n, seed)?;
            if cfg.emit_tags {
                for (name, run) in [("tags_co.ptag", &runs.co), ("tags_cross.ptag", &runs.cross)] {
                    if let Some(r) = run {
                        emit(name, &interleave(&[&r.tags[0], &r.tags[1]]))?;
                    }
                }
            }
            analyze_hom_runs(setup, &runs, n, seed, &cfg.hom)?
        }
        Scenario::Tcspc => {
            let run = simulate_tcspc(setup, n, seed)?;
            if cfg.emit_tags {
                emit("tags.ptag", &interleave(&[&run.tags[0], &run.tags[1]]))?;
            }
            analyze_tcspc_run(setup, &run, seed, &cfg.tcspc)?
        }
        Scenario::Fpi => run_fpi(setup, &cfg.fpi, seed)?,
        Scenario::Rabi => run_rabi(setup, &cfg.rabi, seed)?,
        Scenario::Ensemble => run_ensemble(&cfg.ensemble, seed)?,
    };
    let mut outcome = outcome;
    if cfg.emit_tags && files.is_empty() {
        outcome.report.flag(format!("scenario {} produces no time tags", cfg.scenario));
    }
    Ok((outcome, files))
}

/// Write series, plots and the report; print the summary.
fn finish(mut outcome: Outcome, mut artifacts: Vec<String>, dir: &Path) -> Result<i32> {
    for s in &outcome.series {
        let csv = format!("{}.csv", s.name);
        let mut buf = Vec::new();
        crate::io::write_series_csv(&mut buf, s).map_err(|e| Error::io(dir.join(&csv), e))?;
        write_file(&dir.join(&csv), &buf)?;
        let svg = format!("{}.svg", s.name);
        write_file(&dir.join(&svg), render_svg(s).as_bytes())?;
        artifacts.push(csv);
        artifacts.push(svg);
    }
    let report = &mut outcome.report;
    report.artifacts = artifacts;
    write_file(&dir.join("report.json"), report.to_json().as_bytes())?;
    print_report(report);
    Ok(if report.status == Status::NotConverged { 3 } else { 0 })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn print_report(r: &ExperimentReport) {
    let label = format!("{}/{}", r.preset.as_deref().unwrap_or("custom"), r.scenario);
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "{}", format_table([(label.as_str(), &r.metrics)]));
    for c in &r.checks {
        let _ = writeln!(
            out,
            "{} {}: {:.4} (expected {:.4} ± {:.4})",
            if c.pass { "pass" } else { "FAIL" },
            c.metric,
            c.measured,
            c.expected,
            c.tolerance
        );
    }
    let _ = writeln!(out, "status: {:?}", r.status);
    let _ = writeln!(out, "report sha256: {}", r.digest());
    for f in &r.flags {
        eprintln!("warning: {f}");
    }
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<i32> {
    let cfg = effective_config(&a.run)?;
    let setup = cfg.resolve_setup()?;
    let n = threads(&a.run)?;
    let dir = out_dir(&cfg)?;
    let outcome = with_threads(n, || analyze(&cfg, &setup, a))??;
    finish(outcome, Vec::new(), &dir)
}

fn pair<'a>(channels: &'a [Vec<photonlab_core::TimeTag>], path: &Path) -> Result<[&'a [photonlab_core::TimeTag]; 2]> {
    match channels {
        [a, b, ..] if !a.is_empty() && !b.is_empty() => Ok([a, b]),
        _ => Err(Error::Data { path: path.into(), message: "needs tags on channels 0 and 1".into() }),
    }
}

/// Pulses spanned by the tags, for the report header.
fn pulses_spanned(tags: &[photonlab_core::TimeTag], period_ps: u64) -> u64 {
    tags.last().map_or(0, |t| t.time_ps / period_ps.max(1) + 1)
}

fn analyze(cfg: &RunConfig, setup: &Setup, a: &AnalyzeArgs) -> Result<Outcome> {
    let period = setup.circuit.rep_period_ps;
    let need_tags = || a.tags.clone().ok_or_else(|| Error::Usage("analyze needs --tags".into()));
    match cfg.scenario {
        Scenario::Hbt => {
            let path = need_tags()?;
            let tags = load_tags(&path)?;
            let ch = split_channels(&tags);
            let report = setup.report(Scenario::Hbt, cfg.seed, pulses_spanned(&tags, period), &cfg.hbt);
            analyze_hbt(report, pair(&ch, &path)?, &AnalysisInputs::from_setup(setup), &cfg.hbt, setup.expected.as_ref())
        }
        Scenario::Hom => {
            if a.tags.is_none() && a.cross.is_none() {
                return Err(Error::Usage("hom analysis needs --tags and/or --cross".into()));
            }
            let load = |p: &Option<PathBuf>| p.as_ref().map(|p| load_tags(p).map(|t| (p.clone(), t))).transpose();
            let co = load(&a.tags)?;
            let cross = load(&a.cross)?;
            let co_ch = co.as_ref().map(|(_, t)| split_channels(t));
            let cross_ch = cross.as_ref().map(|(_, t)| split_channels(t));
            let co_pair = co_ch.as_deref().map(|c| pair(c, &co.as_ref().expect("loaded").0)).transpose()?;
            let cross_pair = cross_ch.as_deref().map(|c| pair(c, &cross.as_ref().expect("loaded").0)).transpose()?;
            let spanned = co.iter().chain(cross.iter()).map(|(_, t)| pulses_spanned(t, period)).max().unwrap_or(0);
            let report = setup.report(Scenario::Hom, cfg.seed, spanned, &cfg.hom);
            analyze_hom(
                report,
                co_pair,
                cross_pair,
                &AnalysisInputs::from_setup(setup),
                &cfg.hom.correlation,
                cfg.hom.g2_bgc,
                setup.expected.as_ref(),
            )
        }
        Scenario::Tcspc => {
            let path = need_tags()?;
            let tags = load_tags(&path)?;
            let ch = split_channels(&tags);
            let refs: Vec<&[photonlab_core::TimeTag]> = ch.iter().filter(|c| !c.is_empty()).map(|c| c.as_slice()).collect();
            let report = setup.report(Scenario::Tcspc, cfg.seed, pulses_spanned(&tags, period), &cfg.tcspc);
            analyze_tcspc(report, &refs, &AnalysisInputs::for_tcspc(setup), &cfg.tcspc, setup.expected.as_ref())
        }
        s => Err(Error::Usage(format!("scenario `{s}` has no time tags to analyze (use hbt, hom or tcspc)"))),
    }
}

pub fn cmd_report(a: &ReportArgs) -> Result<i32> {
    if a.reports.is_empty() {
        return Err(Error::Usage("report needs at least one report file".into()));
    }
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut raw = Vec::new();
    let mut reports = Vec::new();
    for p in &a.reports {
        let text = fs::read(p).map_err(|e| Error::io(p, e))?;
        let r: ExperimentReport =
            serde_json::from_slice(&text).map_err(|e| Error::Data { path: p.clone(), message: e.to_string() })?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Data { path: p.clone(), message: format!("unsupported schema version {}", r.schema_version) });
        }
        raw.push(text);
        reports.push(r);
    }
    if let [r] = reports.as_slice() {
        write_file(&dir.join("report.json"), &raw[0])?;
        print_report(r);
        return Ok(0);
    }

    let summary = Summary::collect(&reports);
    write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("summaries serialize").as_bytes())?;
    write_file(&dir.join("summary.csv"), summary.to_csv().as_bytes())?;
    print!("{}", summary.table());

    for (key, header) in crate::report::TABLE_COLUMNS {
        let values: Vec<f64> = summary.rows.iter().filter_map(|r| r.metrics.get(key)).map(|m| m.value).collect();
        if values.len() >= 2 {
            let s = histogram_series(&format!("ensemble_{key}"), header, &values);
            write_file(&dir.join(format!("{}.svg", s.name)), render_svg(&s).as_bytes())?;
        }
    }
    // Population histograms are regenerated from the recorded settings and seed.
    for r in reports.iter().filter(|r| r.scenario == Scenario::Ensemble) {
        let set: EnsembleSettings = serde_json::from_value(r.config["settings"].clone())
            .map_err(|e| Error::Data { path: "ensemble report".into(), message: e.to_string() })?;
        for s in run_ensemble(&set, r.seed)?.series {
            write_file(&dir.join(format!("{}.svg", s.name)), render_svg(&s).as_bytes())?;
        }
    }
    for r in &summary.rows {
        for f in &r.failed_checks {
            eprintln!("warning: {}: failed check {f}", r.source);
        }
    }
    Ok(0)
}

fn histogram_series(name: &str, header: &str, values: &[f64]) -> crate::report::Series {
    let bins = (values.len() as f64).sqrt().ceil().max(1.0) as usize;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0u32; bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let pts = counts.iter().enumerate().map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64)).collect();
    crate::report::Series::new(name, &format!("{header} across sources"), header, "sources", pts)
}
