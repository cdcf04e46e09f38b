use std::path::Path;
use std::process::{Command, Output};

use photonlab::report::REPORT_SCHEMA;
use photonlab::ExperimentReport;
use photonlab_core::rng::{stream, Purpose};
use rand::Rng;
use tempfile::TempDir;

fn photonlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photonlab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PHOTONLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn load(path: &Path) -> ExperimentReport {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn validate(path: &Path) {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", path.display());
}

#[test]
fn simulate_hom_reports_raw_visibility() {
    let dir = TempDir::new().unwrap();
    let o = photonlab(&["simulate", "--preset", "qd1", "--scenario", "hom", "--seed", "7", "--n-pulses", "3000000", "--out", "hom"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = load(&dir.path().join("hom/report.json"));
    assert!(r.metric("v_raw").is_some());
    assert!(r.metric("m").is_some());
    assert!(stdout(&o).contains("V_raw"));
    validate(&dir.path().join("hom/report.json"));
    for a in &r.artifacts {
        assert!(dir.path().join("hom").join(a).exists(), "{a}");
    }
}

#[test]
fn repeated_seed_gives_identical_report_for_any_thread_count() {
    let dir = TempDir::new().unwrap();
    let run = |out: &str, threads: &str| {
        let o = photonlab(
            &["simulate", "--preset", "qd2", "--scenario", "hbt", "--seed", "11", "--n-pulses", "2000000", "--out", out, "--threads", threads],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("report.json")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&photonlab(&["simulate"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["simulate", "--config", "missing.toml"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["simulate", "--scenario", "hbt"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["simulate", "--scenario", "nope", "--preset", "qd1"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["simulate", "--scenario", "hbt", "--preset", "qd9"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["simulate", "--scenario", "rabi", "--preset", "qd1", "--threads", "0"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["analyze", "--scenario", "fpi", "--preset", "qd1"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["report"], dir.path())), 1);
    assert_eq!(code(&photonlab(&["--help"], dir.path())), 0);
}

#[test]
fn threads_fall_back_to_the_environment() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_photonlab"))
        .args(["simulate", "--scenario", "rabi", "--preset", "qd1"])
        .current_dir(dir.path())
        .env("PHOTONLAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("PHOTONLAB_THREADS"));
}

#[test]
fn bad_config_is_rejected_with_its_location() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), "scenario = \"tcspc\"\npreset = \"qd1\"\nseeds = 3\n").unwrap();
    let o = photonlab(&["simulate", "--config", "run.toml"], dir.path());
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("seeds") && err.contains("line 3"), "{err}");
}

#[test]
fn dumped_defaults_load_back() {
    let dir = TempDir::new().unwrap();
    let o = photonlab(&["simulate", "--scenario", "tcspc", "--preset", "qd3", "--dump-defaults"], dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("[setup.emitter]") && text.contains("[fpi]"));
    std::fs::write(dir.path().join("run.toml"), &text).unwrap();
    let a = photonlab(&["simulate", "--config", "run.toml", "--n-pulses", "1000000", "--out", "a"], dir.path());
    let b = photonlab(&["simulate", "--scenario", "tcspc", "--preset", "qd3", "--n-pulses", "1000000", "--out", "b"], dir.path());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    let (ra, rb) = (load(&dir.path().join("a/report.json")), load(&dir.path().join("b/report.json")));
    assert_eq!(ra.metrics, rb.metrics);
    assert_eq!(ra.checks, rb.checks);
}

#[test]
fn analyzing_emitted_tags_reproduces_the_metrics() {
    let dir = TempDir::new().unwrap();
    let o = photonlab(
        &["simulate", "--preset", "qd1", "--scenario", "hbt", "--seed", "5", "--n-pulses", "3000000", "--out", "sim", "--emit-tags"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = photonlab(&["analyze", "--preset", "qd1", "--scenario", "hbt", "--tags", "sim/tags.ptag", "--out", "ana"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (sim, ana) = (load(&dir.path().join("sim/report.json")), load(&dir.path().join("ana/report.json")));
    for key in ["g2_raw", "g2_bgc", "beta", "coincidences", "counts_ch0", "counts_ch1"] {
        assert_eq!(sim.metric(key), ana.metric(key), "{key}");
    }
    validate(&dir.path().join("ana/report.json"));
}

#[test]
fn analyze_hom_from_tag_files() {
    let dir = TempDir::new().unwrap();
    let o = photonlab(
        &["simulate", "--preset", "qd2", "--scenario", "hom", "--seed", "2", "--n-pulses", "2000000", "--out", "sim", "--emit-tags"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = photonlab(
        &["analyze", "--preset", "qd2", "--scenario", "hom", "--tags", "sim/tags_co.ptag", "--cross", "sim/tags_cross.ptag", "--out", "ana"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (sim, ana) = (load(&dir.path().join("sim/report.json")), load(&dir.path().join("ana/report.json")));
    for key in ["v_raw", "m", "g_par", "g_perp"] {
        assert_eq!(sim.metric(key), ana.metric(key), "{key}");
    }
}

#[test]
fn truncated_tag_file_names_the_offset() {
    let dir = TempDir::new().unwrap();
    let o = photonlab(
        &["simulate", "--preset", "qd1", "--scenario", "tcspc", "--n-pulses", "200000", "--out", "sim", "--emit-tags"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = std::fs::read(dir.path().join("sim/tags.ptag")).unwrap();
    let cut = bytes.len() - 5;
    std::fs::write(dir.path().join("cut.ptag"), &bytes[..cut]).unwrap();
    let o = photonlab(&["analyze", "--preset", "qd1", "--scenario", "tcspc", "--tags", "cut.ptag"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(&format!("byte {}", cut + 5 - 16)), "{}", stderr(&o));
}

#[test]
fn poisson_tags_are_uncorrelated() {
    let dir = TempDir::new().unwrap();
    let mut rng = stream(42, Purpose::Test, 0);
    let mut csv = String::from("channel,time_ps\n");
    // Two independent 30 kHz streams over 0.5 s.
    let mut events: Vec<(u64, u8)> = Vec::new();
    for ch in 0..2u8 {
        let mut t = 0.0f64;
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / 30e3 * 1e12;
            if t > 0.5e12 {
                break;
            }
            events.push((t as u64, ch));
        }
    }
    events.sort();
    for (t, ch) in events {
        csv.push_str(&format!("{ch},{t}\n"));
    }
    std::fs::write(dir.path().join("poisson.csv"), csv).unwrap();
    let o = photonlab(&["analyze", "--preset", "qd1", "--scenario", "hbt", "--tags", "poisson.csv", "--out", "ana"], dir.path());
    assert!(code(&o) == 0 || code(&o) == 3, "{}", stderr(&o));
    let r = load(&dir.path().join("ana/report.json"));
    let g = r.metric("g2_raw").expect("g2_raw reported");
    assert!((g.value - 1.0).abs() < 4.0 * g.error, "{g:?}");
}

#[test]
fn report_summarizes_presets() {
    let dir = TempDir::new().unwrap();
    let mut paths = Vec::new();
    for p in ["qd1", "qd2", "qd3"] {
        let out = format!("tcspc_{p}");
        let o = photonlab(&["simulate", "--preset", p, "--scenario", "tcspc", "--n-pulses", "1000000", "--out", &out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        paths.push(format!("{out}/report.json"));
    }
    let o = photonlab(&["simulate", "--scenario", "ensemble", "--out", "ens"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    paths.push("ens/report.json".into());

    let mut args = vec!["report", "--out", "summary"];
    args.extend(paths.iter().map(|s| s.as_str()));
    let o = photonlab(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 4, "{table}");
    for p in ["qd1", "qd2", "qd3"] {
        assert!(table.contains(p));
    }
    let s: photonlab::report::Summary = serde_json::from_slice(&std::fs::read(dir.path().join("summary/summary.json")).unwrap()).unwrap();
    assert_eq!(s.rows.len(), 3);
    assert!(dir.path().join("summary/ensemble_tau_ps.svg").exists());
    assert!(dir.path().join("summary/ensemble_wavelength.svg").exists());
}

#[test]
fn single_report_passes_through() {
    let dir = TempDir::new().unwrap();
    let o = photonlab(&["simulate", "--preset", "qd1", "--scenario", "rabi", "--out", "rabi"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = photonlab(&["report", "rabi/report.json", "--out", "agg"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read(dir.path().join("rabi/report.json")).unwrap(),
        std::fs::read(dir.path().join("agg/report.json")).unwrap()
    );
}

#[test]
fn malformed_report_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("r.json"), "{\"schema_version\": 1}").unwrap();
    assert_eq!(code(&photonlab(&["report", "r.json", "r.json"], dir.path())), 2);
}

#[test]
fn every_scenario_report_matches_the_schema() {
    let dir = TempDir::new().unwrap();
    for s in ["hbt", "hom", "tcspc", "fpi", "rabi", "ensemble"] {
        let o = photonlab(&["simulate", "--preset", "qd1", "--scenario", s, "--n-pulses", "1000000", "--out", s], dir.path());
        assert!(code(&o) == 0 || code(&o) == 3, "{s}: {}", stderr(&o));
        validate(&dir.path().join(s).join("report.json"));
    }
}
