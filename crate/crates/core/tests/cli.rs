use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const EX1_TINY: &str = r#"{
  "model": {"example": "intermittent"},
  "simulate": {"dt": 0.005, "n_steps": 10000, "seed": 3},
  "events": {"mode": "percentile", "percentile": 90},
  "diagnostics": {"influence_stride": 400}
}"#;

fn xevent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xevent")).args(args).output().unwrap()
}

fn setup(config: &str) -> (TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    (dir, cfg, out)
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    xevent(&args)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn tiny_example_one_manifest_lists_core_artifacts() {
    let (_d, cfg, out) = setup(EX1_TINY);
    let o = run(&cfg, &out, &["run"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["complete"], true);
    assert_eq!(m["seed"], 3);
    assert_eq!(m["model"], "intermittent");
    let paths: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    for p in [
        "trajectories/member_0000.csv",
        "beliefs/filter_0000.csv",
        "beliefs/smoother_0000.csv",
        "diagnostics/kl_0000.csv",
        "events/events.csv",
        "report/report.json",
    ] {
        assert!(paths.contains(&p), "{p} missing from manifest: {paths:?}");
    }
    for a in m["artifacts"].as_array().unwrap() {
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
        let on_disk = std::fs::metadata(out.join(a["path"].as_str().unwrap())).unwrap().len();
        assert_eq!(a["bytes"].as_u64().unwrap(), on_disk);
    }
    let stages: Vec<&str> = m["stages"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(stages, ["simulate", "assimilate", "diagnose", "events", "pathways", "report"]);
}

#[test]
fn same_config_gives_identical_manifest() {
    let (_d, cfg, out) = setup(EX1_TINY);
    let out2 = out.with_file_name("out2");
    assert!(run(&cfg, &out, &[]).status.success());
    assert!(run(&cfg, &out2, &[]).status.success());
    let a = std::fs::read(out.join("manifest.json")).unwrap();
    let b = std::fs::read(out2.join("manifest.json")).unwrap();
    assert_eq!(a, b);

    let out3 = out.with_file_name("out3");
    assert!(run(&cfg, &out3, &["--seed", "4"]).status.success());
    let m = read_json(&out3.join("manifest.json"));
    assert_eq!(m["seed"], 4);
    assert_ne!(read_json(&out.join("manifest.json"))["artifacts"][0]["sha256"], Value::Null);
    assert_ne!(a, std::fs::read(out3.join("manifest.json")).unwrap());
}

#[test]
fn filter_diagnostics_on_topographic_is_unsupported() {
    let (_d, cfg, out) = setup(
        r#"{"model": {"example": "topographic"},
            "simulate": {"dt": 0.001, "n_steps": 100, "seed": 1},
            "events": {"mode": "percentile"},
            "diagnostics": {}}"#,
    );
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("diagnose") && e.contains("topographic"), "{e}");
}

#[test]
fn diagnose_without_assimilate_is_a_dependency_error() {
    let (_d, cfg, out) = setup(EX1_TINY);
    assert!(run(&cfg, &out, &["simulate"]).status.success());
    let o = run(&cfg, &out, &["diagnose"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("filter_0000.csv"), "{}", stderr(&o));

    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["complete"], false);
    assert_eq!(m["stages"][0]["status"], "failed");
}

#[test]
fn stage_flag_runs_single_stage() {
    let (_d, cfg, out) = setup(EX1_TINY);
    assert!(run(&cfg, &out, &["--stage", "simulate"]).status.success());
    assert!(out.join("trajectories/member_0000.csv").exists());
    assert!(!out.join("beliefs").exists());
    assert_eq!(run(&cfg, &out, &["--stage", "bogus"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let (_d, cfg, out) = setup(
        r#"{"model": {"example": "intermittent"},
            "simulate": {"dt": 0.005, "n_steps": 100, "seed": 1, "sede": 2},
            "events": {"mode": "percentile"}}"#,
    );
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sede"), "{}", stderr(&o));
}

#[test]
fn config_defaults_to_out_directory() {
    let (_d, cfg, out) = setup(EX1_TINY);
    assert!(run(&cfg, &out, &["simulate"]).status.success());
    let o = xevent(&["--out", out.to_str().unwrap(), "assimilate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(xevent(&["simulate"]).status.code(), Some(2));
}

fn separated_peak_count(x: &[f64], gap: f64) -> usize {
    let peaks: Vec<usize> = (1..x.len() - 1).filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1]).collect();
    let mut order = peaks.clone();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&j| (i as f64 - j as f64).abs() >= gap) {
            kept.push(i);
        }
    }
    kept.len()
}

#[test]
fn percentile_events_select_top_decile_of_peaks() {
    let (_d, cfg, out) = setup(
        r#"{"model": {"example": "intermittent"},
            "simulate": {"dt": 0.005, "n_steps": 60000, "seed": 9},
            "events": {"mode": "tails", "fraction": 0.05}}"#,
    );
    assert!(run(&cfg, &out, &["simulate"]).status.success());
    assert!(run(&cfg, &out, &["assimilate"]).status.success());
    let o = run(&cfg, &out, &["events", "--mode", "percentile", "--q", "90"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(out.join("trajectories/member_0000.csv")).unwrap();
    let u: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    let n_peaks = separated_peak_count(&u, 2.0 / 0.005 - 1e-9);
    let expected = (0.1 * n_peaks as f64).ceil() as i64;

    let stats = read_json(&out.join("events/statistics.json"));
    let n = stats["n_events"].as_i64().unwrap();
    assert!(n_peaks >= 30, "only {n_peaks} peaks");
    assert!((n - expected).abs() <= 1, "{n} events vs ⌈0.1 × {n_peaks}⌉ = {expected}");
    assert_eq!(stats["n_negative"], 0);
}

#[test]
fn report_validates_against_schema() {
    let (_d, cfg, out) = setup(
        r#"{"model": {"example": "damping_forcing"},
            "simulate": {"dt": 0.005, "n_steps": 40000, "seed": 2},
            "events": {"mode": "tails", "fraction": 0.05, "two_sided": true},
            "diagnostics": {"influence_stride": 400},
            "cluster": {"k": 3, "restarts": 5, "seed": 0}}"#,
    );
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));

    let schema: Value = serde_json::from_str(xevent::pipeline::REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let report = read_json(&out.join("report/report.json"));
    if let Err(errors) = compiled.validate(&report) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("report violates schema: {msgs:#?}");
    }

    let events = report["events"].as_array().unwrap();
    assert!(!events.is_empty());
    assert!(events.iter().all(|e| e["cluster"].is_u64()));
    for fig in report["figures"].as_array().unwrap() {
        assert!(out.join(fig.as_str().unwrap()).exists());
    }

    let mut broken = report.clone();
    broken["unexpected"] = Value::Bool(true);
    assert!(!compiled.is_valid(&broken));
}

#[test]
fn report_requires_upstream_artifacts() {
    let (_d, cfg, out) = setup(EX1_TINY);
    let o = run(&cfg, &out, &["report"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("missing upstream artifact"), "{}", stderr(&o));
}

#[test]
fn shipped_configs_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = xevent::pipeline::PipelineConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.build_model().unwrap();
        n += 1;
    }
    assert!(n >= 4);
}
