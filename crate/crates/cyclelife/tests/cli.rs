//! Command-line behavior: exit codes, the single-line error contract,
//! staged output cleanup, and the artifact layout of each subcommand.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cyclelife(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclelife"))
        .args(args)
        .output()
        .expect("spawn cyclelife")
}

fn expect_ok(args: &[&str]) -> String {
    let out = cyclelife(args);
    assert!(
        out.status.success(),
        "cyclelife {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn synth_fleet(dir: &Path, n_cells: usize, seed: u64) {
    expect_ok(&[
        "synth",
        "--n-cells",
        &n_cells.to_string(),
        "--seed",
        &seed.to_string(),
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cyclelife(&["--bogus-flag"]).status.code(), Some(2));
    assert_eq!(cyclelife(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cyclelife(&[]).status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    assert_eq!(cyclelife(&["--help"]).status.code(), Some(0));
    assert_eq!(cyclelife(&["pipeline", "--help"]).status.code(), Some(0));
}

#[test]
fn runtime_error_is_single_line_and_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cyclelife(&[
        "pipeline",
        "--input",
        "/nonexistent-dataset",
        "--output-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
}

#[test]
fn synth_writes_fleet_manifest_and_run_doc() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("deep/nested/fleet"); // missing dirs get created
    synth_fleet(&dir, 6, 3);
    let entries: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let summaries = entries
        .iter()
        .filter(|n| n.ends_with(".csv") && !n.ends_with(".curves.csv"))
        .count();
    let curves = entries
        .iter()
        .filter(|n| n.ends_with(".curves.csv"))
        .count();
    assert_eq!(summaries, 6);
    assert_eq!(curves, 6);
    assert!(entries.iter().any(|n| n == "manifest.json"));
    assert!(entries.iter().any(|n| n == "run.json"));

    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["schema"], "run/1");
    assert_eq!(run["config"]["seed"], 3);
    assert_eq!(run["config"]["n_cells"], 6);
    assert!(run["timings_s"]["total"].as_f64().unwrap() >= 0.0);
}

#[test]
fn synth_default_fleet_has_124_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fleet");
    let stdout = expect_ok(&["synth", "--output-dir", dir.to_str().unwrap()]);
    assert!(stdout.contains("generated 124 cells"), "{stdout}");
    let summaries = fs::read_dir(&dir)
        .unwrap()
        .filter(|e| {
            let name = e
                .as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .into_owned();
            name.ends_with(".csv") && !name.ends_with(".curves.csv")
        })
        .count();
    assert_eq!(summaries, 124);
}

#[test]
fn voltage_resolved_without_curves_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fleet(&data, 5, 1);
    for entry in fs::read_dir(&data).unwrap() {
        let path = entry.unwrap().path();
        if path.to_string_lossy().ends_with(".curves.csv") {
            fs::remove_file(path).unwrap();
        }
    }
    fs::remove_file(data.join("run.json")).unwrap();

    let out_dir = tmp.path().join("features");
    let out = cyclelife(&[
        "features",
        "--input",
        data.to_str().unwrap(),
        "--feature-mode",
        "voltage-resolved",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("curves required"), "{stderr}");
    // failed runs leave no partial outputs behind
    assert!(!out_dir.join("features.csv").exists());
    assert!(!out_dir.join("features.rejects.csv").exists());
    let leftovers = fs::read_dir(&out_dir).map(|d| d.count()).unwrap_or(0);
    assert_eq!(leftovers, 0);

    // paper-faithful mode only needs the summaries
    let stdout = expect_ok(&[
        "features",
        "--input",
        data.to_str().unwrap(),
        "--feature-mode",
        "paper-faithful",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("5 cells"), "{stdout}");
    let text = fs::read_to_string(out_dir.join("features.csv")).unwrap();
    assert_eq!(text.lines().count(), 6); // header + 5 rows
}

#[test]
fn pipeline_emits_full_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fleet(&data, 12, 2);
    let out = tmp.path().join("run");
    let stdout = expect_ok(&[
        "pipeline",
        "--input",
        data.to_str().unwrap(),
        "--model",
        "both",
        "--seed",
        "5",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("gpr:"), "{stdout}");
    assert!(stdout.contains("enr:"), "{stdout}");

    for name in [
        "features.csv",
        "features.rejects.csv",
        "gpr_model.json",
        "enr_model.json",
        "cv_curve.csv",
        "metrics.csv",
        "report_gpr.csv",
        "report_enr.csv",
        "residuals_gpr.csv",
        "residuals_enr.csv",
        "scatter_gpr.csv",
        "scatter_enr.csv",
        "weights_gpr.csv",
        "weights_enr.csv",
        "run.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "model,rmse_cycles,pct_err");
    assert!(lines[1].starts_with("gpr,"));
    assert!(lines[2].starts_with("enr,"));

    // features row count matches the fleet
    let features = fs::read_to_string(out.join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 13); // header + 12 cells
}

#[test]
fn train_then_evaluate_matches_pipeline_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fleet(&data, 10, 4);

    let pipe_out = tmp.path().join("pipe");
    expect_ok(&[
        "pipeline",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "6",
        "--output-dir",
        pipe_out.to_str().unwrap(),
    ]);

    let train_out = tmp.path().join("train");
    expect_ok(&[
        "train",
        "--features",
        pipe_out.join("features.csv").to_str().unwrap(),
        "--seed",
        "6",
        "--output-dir",
        train_out.to_str().unwrap(),
    ]);
    assert!(train_out.join("gpr_model.json").exists());
    assert!(train_out.join("enr_model.json").exists());
    assert!(train_out.join("cv_curve.csv").exists());

    let eval_out = tmp.path().join("eval");
    expect_ok(&[
        "evaluate",
        "--features",
        pipe_out.join("features.csv").to_str().unwrap(),
        "--gpr-model",
        train_out.join("gpr_model.json").to_str().unwrap(),
        "--enr-model",
        train_out.join("enr_model.json").to_str().unwrap(),
        "--seed",
        "6",
        "--output-dir",
        eval_out.to_str().unwrap(),
    ]);

    let a = fs::read(pipe_out.join("metrics.csv")).unwrap();
    let b = fs::read(eval_out.join("metrics.csv")).unwrap();
    assert_eq!(a, b, "train/evaluate disagrees with the one-shot pipeline");
}

#[test]
fn evaluate_rejects_holdout_split() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cyclelife(&[
        "evaluate",
        "--features",
        "whatever.csv",
        "--split",
        "holdout",
        "--output-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("pipeline --split holdout"), "{stderr}");
}

#[test]
fn pipeline_holdout_split_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fleet(&data, 16, 8);
    let out = tmp.path().join("run");
    expect_ok(&[
        "pipeline",
        "--input",
        data.to_str().unwrap(),
        "--split",
        "holdout",
        "--holdout-fraction",
        "0.25",
        "--seed",
        "2",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    // reports cover only the held-out quarter
    let scatter = fs::read_to_string(out.join("scatter_gpr.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 5); // header + ceil(0.25 * 16)
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["split"]["kind"], "holdout");
}

#[test]
fn config_file_supplies_defaults_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "n-cells=5\nseed=11\n").unwrap();

    let a = tmp.path().join("a");
    let stdout = expect_ok(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        a.to_str().unwrap(),
    ]);
    assert!(stdout.contains("generated 5 cells (seed 11)"), "{stdout}");

    let b = tmp.path().join("b");
    let stdout = expect_ok(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--n-cells",
        "3",
        "--output-dir",
        b.to_str().unwrap(),
    ]);
    assert!(stdout.contains("generated 3 cells (seed 11)"), "{stdout}");
}

#[test]
fn ingest_applies_manifest_and_canonicalizes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fleet(&data, 4, 9);

    // exclude one cell by editing the manifest
    let manifest_path = data.join("manifest.json");
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["excluded_cells"] = serde_json::json!([
        {"cell_id": "b1c000", "reason": "noisy"}
    ]);
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();

    let out = tmp.path().join("canonical");
    let stdout = expect_ok(&[
        "ingest",
        "--input",
        data.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(
        stdout.contains("ingested 4 cells (3 included, 1 excluded)"),
        "{stdout}"
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["excluded_cells"][0]["cell_id"], "b1c000");
}
