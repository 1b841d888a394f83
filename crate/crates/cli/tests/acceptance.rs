//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Drives the `qhalab` binary where a command exists and
//! the library otherwise.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qhalab::frame::{greedy_index_sets, verify_condition2, CapacitySchedule};
use qhalab::io::{frame_plan_from_json, load_frame_plan};
use qhalab::lattice::{l1_window, PairOrdering};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_qhalab");

/// Configurations for the generator spectrum check.
const SPECTRUM_CONFIGS: [(u32, u64); 6] = [(3, 0), (3, 1), (4, 0), (4, 1), (6, 0), (6, 1)];
/// Configurations for the residual, bound and Neumann checks. Larger
/// windows need a dense SVD of an operator too big for this machine.
const TRIAL_CONFIGS: [(u32, u64); 3] = [(6, 0), (4, 0), (6, 1)];
const TRIALS: usize = 50;

type VerifyRuns = Vec<((u32, u64), Run)>;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn qhalab(args: &[&str]) -> Run {
    let out = Command::new(BIN).args(args).output().expect("qhalab runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn report(run: &Run) -> Value {
    serde_json::from_str(&run.stdout).unwrap_or(Value::Null)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("temporary paths are UTF-8")
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn build_plan(dir: &Path, p: u32, radius: u64) -> (Run, std::path::PathBuf) {
    let out = dir.join(format!("plan-p{p}-r{radius}"));
    let run = qhalab(&[
        "frame-build",
        "--p",
        &p.to_string(),
        "--radius",
        &radius.to_string(),
        "--out",
        path_str(&out),
    ]);
    (run, out.join("plan.json"))
}

fn criterion_1(dir: &Path) -> Verdict {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    for (p, r) in SPECTRUM_CONFIGS {
        let (run, _) = build_plan(dir, p, r);
        let rep = report(&run);
        let dev = num(&rep["spectrum"]["max_deviation"]);
        let norm = num(&rep["norm"]["relative_deviation"]);
        let good = run.code == 0 && dev <= 1e-10 && norm <= 1e-10;
        ok &= good;
        if good {
            notes.push(format!("(p={p},r={r}) dev {dev:.1e} norm {norm:.1e}"));
        } else {
            let why = rep["error"].as_str().map(str::to_owned).unwrap_or(run.stderr.trim().to_owned());
            notes.push(format!("(p={p},r={r}) FAILED: {why}"));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    verdict(ok, format!("{}; {:.1}s (limit 10s)", notes.join("; "), elapsed.as_secs_f64()))
}

/// frame-verify reports for the trial configurations, and the total time.
fn verify_reports(dir: &Path) -> (VerifyRuns, Duration) {
    let start = Instant::now();
    let mut out = Vec::new();
    for (p, r) in TRIAL_CONFIGS {
        let (_, plan) = build_plan(dir, p, r);
        let run = qhalab(&[
            "frame-verify",
            "--plan",
            path_str(&plan),
            "--trials",
            &TRIALS.to_string(),
            "--seed",
            "2024",
        ]);
        out.push(((p, r), run));
    }
    (out, start.elapsed())
}

fn criterion_2(runs: &[((u32, u64), Run)], elapsed: Duration) -> Verdict {
    let mut ok = elapsed < Duration::from_secs(60);
    let mut notes = Vec::new();
    for ((p, r), run) in runs {
        let rep = report(run);
        let dev = num(&rep["residual_spectrum"]["max_deviation"]);
        let good = dev <= 1e-8 && rep["failing_trial"].is_null();
        ok &= good;
        notes.push(format!("(p={p},r={r}) max dev {dev:.1e}"));
    }
    verdict(
        ok,
        format!("{TRIALS} trials each: {}; {:.1}s (limit 60s)", notes.join("; "), elapsed.as_secs_f64()),
    )
}

fn criterion_3(runs: &[((u32, u64), Run)]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for ((p, r), run) in runs {
        let rep = report(run);
        let ratio = num(&rep["frame_bound"]["max_ratio"]);
        let bound = num(&rep["frame_bound"]["bound"]);
        let good = ratio <= bound * (1.0 + 1e-12) && bound <= 0.5;
        ok &= good;
        notes.push(format!("(p={p},r={r}) worst {ratio:.4} <= {bound:.4}"));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_4(dir: &Path) -> Verdict {
    // Greedy families of every total 1..=30 over the radius-1 window.
    let window = l1_window(1, 1).expect("window");
    let ordering = PairOrdering::new(1).expect("ordering");
    let mut clean = 0;
    for total in 1..=30u64 {
        let mut caps = BTreeMap::new();
        for t in 0..total {
            *caps.entry(window[(t as usize) % window.len()].clone()).or_insert(0) += 1;
        }
        let schedule = CapacitySchedule::unbounded(6.0, caps).expect("schedule");
        let family = greedy_index_sets(&schedule, &ordering).expect("greedy");
        if verify_condition2(&family).expect("oracle").is_empty() {
            clean += 1;
        }
    }

    // Five corruptions of the p = 6 plan, each checked by the CLI.
    let (_, plan_path) = build_plan(dir, 6, 0);
    let text = std::fs::read_to_string(&plan_path).expect("plan file");
    let plan = frame_plan_from_json(&text).expect("plan parses");
    let set: Vec<_> = plan.family().sets().values().next().expect("one set").clone();
    let mut caught = 0;
    let cases = [(0, 1, 2), (1, 2, 3), (3, 5, 0), (2, 7, 11), (10, 4, 6)];
    for (n, &(a, b, victim)) in cases.iter().enumerate() {
        let moved = set[b].checked_add(&set[b]).and_then(|x| x.checked_sub(&set[a])).expect("small");
        let mut json: Value = serde_json::from_str(&text).expect("plan JSON");
        let coords: Vec<Value> = moved
            .coords()
            .iter()
            .map(|c| serde_json::from_str(&c.to_string()).expect("integer"))
            .collect();
        json["index_sets"][0]["indices"][victim] = Value::Array(coords);
        let bad_path = dir.join(format!("corrupt-{n}.json"));
        std::fs::write(&bad_path, json.to_string()).expect("write corrupt plan");
        let run = qhalab(&["frame-verify", "--plan", path_str(&bad_path), "--trials", "0"]);
        let rep = report(&run);
        let witness = &rep["condition2"]["witness"];
        let brute = load_frame_plan(&json.to_string())
            .map(|l| !verify_condition2(l.plan.family()).expect("oracle").is_empty())
            .unwrap_or(false);
        if run.code == 1 && witness["i"].is_array() && witness["j_tilde"].is_array() && brute {
            caught += 1;
        }
    }
    verdict(
        clean == 30 && caught == 5,
        format!("{clean}/30 greedy families clean; {caught}/5 corruptions caught with a quadruple"),
    )
}

fn criterion_5(runs: &[((u32, u64), Run)]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for ((p, r), run) in runs {
        let rep = report(run);
        let ratio = num(&rep["neumann"]["max_step_ratio"]);
        let last = num(&rep["neumann"]["max_final_error"]);
        let good = ratio <= 0.55 && last <= 1e-9;
        ok &= good;
        notes.push(format!("(p={p},r={r}) step ratio {ratio:.2e}, final {last:.1e}"));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let run = qhalab(&["qha-verify", "--grid-n", "32", "--grid-l", "8"]);
    let elapsed = start.elapsed();
    let rep = report(&run);
    let inv = num(&rep["involution"]["error"]);
    let cov = num(&rep["covariance"]["error"]);
    let conv = num(&rep["convolution_refinement"]["ratio"]);
    let quant = num(&rep["quantization_refinement"]["ratio"]);
    let ok = inv <= 1e-10 && cov <= 1e-8 && conv >= 2.0 && quant >= 2.0 && elapsed < Duration::from_secs(60);
    verdict(
        ok,
        format!(
            "involution {inv:.1e}, covariance {cov:.1e}, convolution ratio {conv:.3e}, quantization ratio {quant:.3e}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Verdict {
    let run = qhalab(&["t2"]);
    let rep = report(&run);
    let unit = rep["special_form"]["unit_square"]["special"] == Value::Bool(true);
    let wide = &rep["special_form"]["wide_rectangle"];
    let wide_ok = wide["special"] == Value::Bool(false) && wide["witness"]["shifts"].as_array().is_some_and(|s| s.len() > 1);
    let pairing = num(&rep["orthogonal_witness"]["max_pairing"]);
    let checked = rep["orthogonal_witness"]["translates_checked"].as_u64().unwrap_or(0);
    verdict(
        unit && wide_ok && pairing <= 1e-8 && checked == 25,
        format!("unit square special: {unit}; wide rectangle witness: {wide_ok}; max pairing {pairing:.1e} over {checked} translates"),
    )
}

fn criterion_8() -> Verdict {
    let run = qhalab(&["perturbed"]);
    let rep = report(&run);
    let monotone = rep["checks"]["nonincreasing"] == Value::Bool(true);
    let halved = rep["checks"]["final_at_most_half_initial"] == Value::Bool(true);
    let ratios: Vec<String> = rep["targets"]
        .as_array()
        .map(|t| t.iter().map(|x| format!("{:.3}", num(&x["final_over_initial"]))).collect())
        .unwrap_or_default();
    verdict(
        monotone && halved,
        format!("nonincreasing: {monotone}; final/initial per target [{}] (need <= 0.5)", ratios.join(", ")),
    )
}

fn criterion_9(dir: &Path) -> Verdict {
    let (_, plan) = build_plan(dir, 4, 0);
    let plan = path_str(&plan).to_owned();
    let commands: Vec<Vec<&str>> = vec![
        vec!["frame-build", "--p", "4", "--seed", "7"],
        vec!["frame-verify", "--plan", &plan, "--trials", "10", "--seed", "7"],
        vec!["qha-verify", "--seed", "7"],
        vec!["t2", "--seed", "7"],
        vec!["perturbed", "--seed", "7"],
    ];
    let mut same = 0;
    for args in &commands {
        let (a, b) = (qhalab(args), qhalab(args));
        if a.code == b.code && !a.stdout.is_empty() && a.stdout == b.stdout {
            same += 1;
        }
    }
    verdict(same == commands.len(), format!("{same}/{} commands byte-identical across two runs", commands.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let dir = dir.path();
    let mut results = vec![("1 generator spectrum", criterion_1(dir))];
    let (runs, elapsed) = verify_reports(dir);
    results.push(("2 residual spectrum", criterion_2(&runs, elapsed)));
    results.push(("3 frame bound", criterion_3(&runs)));
    results.push(("4 condition-2 oracle", criterion_4(dir)));
    results.push(("5 Neumann reconstruction", criterion_5(&runs)));
    results.push(("6 transform identities", criterion_6()));
    results.push(("7 support and witness certificates", criterion_7()));
    results.push(("8 completeness probe", criterion_8()));
    results.push(("9 determinism", criterion_9(dir)));
    let mut failures = 0;
    for (name, v) in &results {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        failures += usize::from(!v.passed);
        println!("{tag} criterion {name}: {}", v.detail);
    }
    println!("acceptance: {} passed, {failures} failed", results.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
