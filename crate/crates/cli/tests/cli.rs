use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_qhalab");

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn build(dir: &std::path::Path) -> std::path::PathBuf {
    let (code, _, _) = run(&["frame-build", "--p", "6", "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    dir.join("plan.json")
}

#[test]
fn p_at_most_two_is_invalid() {
    let (code, stdout, stderr) = run(&["frame-build", "--p", "2"]);
    assert_eq!(code, 2);
    assert!(stdout.is_empty());
    assert!(stderr.contains("greater than 2"), "{stderr}");
}

#[test]
fn build_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let plan = build(dir.path());
    let (code, stdout, _) = run(&["frame-verify", "--plan", plan.to_str().unwrap(), "--trials", "3"]);
    assert_eq!(code, 0, "{stdout}");
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["passed"], Value::Bool(true));
    assert_eq!(report["condition2"]["violations"], 0);
    assert!(dir.path().join("frame-build.json").exists());
}

#[test]
fn zero_trials_checks_structure_only() {
    let dir = tempfile::tempdir().unwrap();
    let plan = build(dir.path());
    let (code, stdout, _) = run(&["frame-verify", "--plan", plan.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(code, 0);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["parameters"]["trials"], 0);
    assert_eq!(report["residual_spectrum"]["max_deviation"].as_f64(), Some(0.0));
}

#[test]
fn malformed_plan_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    for body in ["{", r#"{"p":4,"d":1,"capacities":[],"index_sets":[]}"#] {
        std::fs::write(&path, body).unwrap();
        let (code, _, _) = run(&["frame-verify", "--plan", path.to_str().unwrap()]);
        assert_eq!(code, 3, "{body}");
    }
    let (code, _, _) = run(&["frame-verify", "--plan", "/nonexistent/plan.json"]);
    assert_eq!(code, 3);
    let (code, _, _) = run(&["frame-verify"]);
    assert_eq!(code, 2);
}

#[test]
fn moved_index_prints_quadruple() {
    let dir = tempfile::tempdir().unwrap();
    let plan = build(dir.path());
    let mut json: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    let set = json["index_sets"][0]["indices"].as_array().unwrap().clone();
    let first = |i: usize| set[i][0].as_i64().unwrap();
    // 2·b − a with a = set[0], b = set[1], placed over set[2].
    json["index_sets"][0]["indices"][2][0] = Value::from(2 * first(1) - first(0));
    let bad = dir.path().join("moved.json");
    std::fs::write(&bad, json.to_string()).unwrap();
    let (code, stdout, _) = run(&["frame-verify", "--plan", bad.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(code, 1);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["condition2"]["passed"], Value::Bool(false));
    assert_eq!(report["generator"]["passed"], Value::Bool(false));
    let witness = &report["condition2"]["witness"];
    for key in ["i", "i_tilde", "j", "j_tilde"] {
        assert!(witness[key].is_array(), "{key}");
    }
}

#[test]
fn misaligned_shift_exits_three() {
    let (code, _, stderr) = run(&["qha-verify", "--shift", "0.1,0"]);
    assert_eq!(code, 3);
    assert!(stderr.contains("multiple of L/N"), "{stderr}");
    let (code, _, _) = run(&["qha-verify", "--shift", "-0.5,0.25"]);
    assert_eq!(code, 0);
    let (code, _, _) = run(&["qha-verify", "--grid-n", "48"]);
    assert_eq!(code, 2);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"p": 6, "radius": 0, "tolerance-scale": 2}"#).unwrap();
    let (code, stdout, _) = run(&["frame-build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["parameters"]["p"].as_f64(), Some(6.0));
    assert_eq!(report["index_total"], 12);
    let (_, stdout, _) = run(&["frame-build", "--config", cfg.to_str().unwrap(), "--p", "4"]);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["parameters"]["p"].as_f64(), Some(4.0));
    assert_eq!(report["index_total"], 64);

    std::fs::write(&cfg, r#"{"q": 6}"#).unwrap();
    let (code, _, _) = run(&["frame-build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 3);
}

#[test]
fn t2_and_perturbed_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, _) = run(&["t2", "--grid-n", "32", "--out", out]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.path().join("witness.csv")).unwrap();
    assert!(csv.starts_with("# N=32,L=8\nx,w,re,im\n"));
    assert!(qhalab::io::phase_space_from_csv(&csv).unwrap().max_abs() > 0.0);

    let (_, stdout, _) = run(&["perturbed", "--grid-n", "32", "--radius", "1", "--out", out]);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["checks"]["nonincreasing"], Value::Bool(true));
    let curves = std::fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    let parsed = qhalab::io::ResidualCurves::from_csv(&curves).unwrap();
    assert_eq!(parsed.curves.len(), 3);
    let (code, _, _) = run(&["perturbed", "--decay-a", "1.5"]);
    assert_eq!(code, 2);
}
