use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn temperate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_temperate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/scenarios"))
}

#[test]
fn lists_shipped_scenarios() {
    let out = temperate(&["--list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["disc_k0_n1", "ball_minus_hyperplane_n2"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn shipped_files_match_schema() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(scenario_dir().join("../schema/scenario.schema.json")).unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let mut count = 0;
    for entry in fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", path.display());
        count += 1;
    }
    assert!(count >= 7);
    let mut bad: Value =
        serde_json::from_str(&fs::read_to_string(scenario_dir().join("disc_k0_n1.json")).unwrap())
            .unwrap();
    bad["grid"]["resolution"] = 100.into();
    assert!(!validator.is_valid(&bad));
}

#[test]
fn bad_resolution_exits_2_with_pointer() {
    let out = temperate(&["run", "disc_k0_n1", "--override", "grid.resolution=100"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.resolution"));
}

#[test]
fn unknown_field_exits_2() {
    let out = temperate(&["run", "disc_k0_n1", "--override", "pipeline.colour=blue"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pipeline"));
}

#[test]
fn disc_scenario_passes_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let out = temperate(&["run", "disc_k0_n1", "--out", root]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let dir = tmp.path().join("disc_k0_n1");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["budget"]["output_order"], 3);
    assert_eq!(report["overall_pass"], true);
    let growth = fs::read_to_string(dir.join("growth_shells.csv")).unwrap();
    assert!(growth.starts_with("log2_inv_d,log_sup\n"));
    assert!(growth.lines().skip(1).all(|l| l.split(',').count() == 2));
    assert!(fs::read_to_string(dir.join("norm_series.csv"))
        .unwrap()
        .starts_with("resolution,epsilon,norm\n"));
    assert!(fs::read_to_string(dir.join("cg_convergence.csv"))
        .unwrap()
        .starts_with("iteration,residual\n"));
    assert!(fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .contains("overall PASS"));
}

#[test]
fn stage_failure_exits_1_and_keeps_report() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let out = temperate(&[
        "run",
        "disc_zbar_n1",
        "--out",
        root,
        "--override",
        "grid.resolution=128",
        "--override",
        "pipeline.tolerances.presolve=1e-12",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("disc_zbar_n1/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["overall_pass"], false);
    assert_eq!(report["failed_stage"], "presolve");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = temperate(&[
            "run",
            "disc_random_n1",
            "--out",
            dir.path().to_str().unwrap(),
            "--override",
            "grid.resolution=128",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for file in [
        "report.json",
        "summary.txt",
        "growth_shells.csv",
        "norm_series.csv",
        "cg_convergence.csv",
    ] {
        let x = fs::read(a.path().join("disc_random_n1").join(file)).unwrap();
        let y = fs::read(b.path().join("disc_random_n1").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn jobs_run_several_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let out = temperate(&[
        "run",
        "disc_zbar_n1",
        "disc_modulus_n1",
        "--jobs",
        "2",
        "--out",
        tmp.path().to_str().unwrap(),
        "--override",
        "grid.resolution=128",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("disc_zbar_n1/report.json").exists());
    assert!(tmp.path().join("disc_modulus_n1/report.json").exists());
}

#[test]
fn config_file_path_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("mine.json");
    let mut doc: Value = serde_json::from_str(
        &fs::read_to_string(scenario_dir().join("disc_modulus_n1.json")).unwrap(),
    )
    .unwrap();
    doc["name"] = "mine".into();
    doc["grid"]["resolution"] = 128.into();
    doc["output"] =
        serde_json::json!({"directory": tmp.path().join("artifacts").to_str().unwrap()});
    fs::write(&cfg, doc.to_string()).unwrap();
    let out = temperate(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("artifacts/report.json").exists());
}
