use std::path::Path;
use std::process::{Command, Output};

fn fluxmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluxmi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, out: &Path) -> String {
    let cfg = serde_json::json!({
        "schema_version": 1,
        "input": {"kind": "synth", "scenario": "mcar_small"},
        "imputation": {"m": 3, "max_iter": 5},
        "seed": 11,
        "output_dir": out,
    });
    let path = dir.join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn run_writes_every_stage_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = small_config(dir.path(), &out);
    let o = fluxmi(&["run", "--config", &cfg, "-q"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "analysis/fluxplot.svg",
        "analysis/fluxplot.csv",
        "imputation/train_imp3.csv",
        "imputation/trace.svg",
        "models/selected.csv",
        "pooling/tally.csv",
        "pooling/pooled.csv",
        "evaluation/auc_summary.csv",
        "evaluation/roc_all.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["command"], "run");
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"pooling/pooled.csv"));
    for f in &listed {
        assert!(out.join(f).is_file(), "manifest lists absent {f}");
    }
    assert!(!read(&out.join("manifest.json")).contains("parallel"));
}

#[test]
fn same_seed_same_bytes_and_parallel_matches_serial() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = small_config(dir.path(), &a);
    assert!(fluxmi(&["impute", "--config", &cfg, "-q"]).status.success());
    let cfg_b = small_config(dir.path(), &b);
    assert!(fluxmi(&["impute", "--config", &cfg_b, "-q", "--parallel"]).status.success());
    for k in 1..=3 {
        let f = format!("imputation/train_imp{k}.csv");
        assert_eq!(read(&a.join(&f)), read(&b.join(&f)));
    }
    assert_eq!(read(&a.join("imputation/trace.csv")), read(&b.join("imputation/trace.csv")));
}

#[test]
fn seed_override_changes_imputations() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = small_config(dir.path(), &a);
    assert!(fluxmi(&["impute", "--config", &cfg, "-q"]).status.success());
    let b_str = b.to_string_lossy().into_owned();
    assert!(fluxmi(&["impute", "--config", &cfg, "-q", "--seed", "12", "--out", &b_str]).status.success());
    let f = "imputation/train_imp1.csv";
    assert_ne!(read(&a.join(f)), read(&b.join(f)));
}

#[test]
fn single_stage_commands_write_only_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = small_config(dir.path(), &out);
    assert!(fluxmi(&["pool", "--config", &cfg, "-q"]).status.success());
    assert!(out.join("pooling/supermodel_tests.csv").is_file());
    assert!(!out.join("analysis").exists());
    assert!(!out.join("imputation").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = fluxmi(&["synth", "no_such_scenario", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_scenario"));

    let missing = dir.path().join("absent.json");
    let o = fluxmi(&["analyze", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "imputation": {"m": 1}}"#).unwrap();
    let o = fluxmi(&["analyze", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // a regular file where the output directory should be
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = fluxmi(&["synth", "mcar_small", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_one_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "x,y\n1,0\nabc,1\n").unwrap();
    let cfg = serde_json::json!({
        "input": {"kind": "csv", "path": data, "schema": [
            {"name": "x", "kind": "continuous", "role": "predictor"},
            {"name": "y", "kind": "binary", "role": "outcome"}
        ]},
        "output_dir": dir.path().join("out"),
    });
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = fluxmi(&["analyze", "--config", path.to_str().unwrap(), "-q"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("load failed"));
}

#[test]
fn synth_writes_data_truth_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(fluxmi(&["synth", "mar_bivariate", "--out", d, "--seed", "3"]).status.success());
    let csv = read(&dir.path().join("mar_bivariate.csv"));
    assert_eq!(csv.lines().next().unwrap(), "x1,x2,y");
    assert_eq!(csv.lines().count(), 501);
    let truth: serde_json::Value = serde_json::from_str(&read(&dir.path().join("mar_bivariate_truth.json"))).unwrap();
    assert_eq!(truth["outcome"], "y");
    let cfg: serde_json::Value = serde_json::from_str(&read(&dir.path().join("mar_bivariate_config.json"))).unwrap();
    assert_eq!(cfg["seed"], 3);
}
