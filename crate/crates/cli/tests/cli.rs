use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lfrtune::io::{problem_file, to_json};
use lfrtune::lfr::{LfrPlant, Matrix, Problem, UncertaintyBox, UncertaintyStructure};
use lfrtune::random::{random_nominal_problem, random_problem, RandomInstance, RandomProblemConfig};
use lfrtune::synthesis::robust_performance_bound;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn lfrtune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfrtune")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on standard output")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or_default();
    serde_json::from_str(last).expect("JSON error object as the last line of standard error")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn feasible_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let inst = random_problem(&mut rng, &RandomProblemConfig::default());
        if robust_performance_bound(&inst.problem, 0.05).map_or(false, |o| o.is_feasible()) {
            return inst;
        }
    }
}

/// Problem and secret files for a feasible random instance.
fn fixture(dir: &TempDir, seed: u64) -> (PathBuf, PathBuf, RandomInstance) {
    let inst = feasible_instance(seed);
    let problem = write(dir, "problem.json", &to_json(&problem_file(&inst.problem)));
    let secret = write(dir, "secret.json", &to_json(&serde_json::json!({ "delta0": inst.delta0 })));
    (problem, secret, inst)
}

fn delta_arg(delta: &[f64]) -> String {
    delta.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
}

#[test]
fn synth_without_uncertainty_matches_nominal() {
    let dir = TempDir::new().unwrap();
    let problem = random_nominal_problem(&mut ChaCha8Rng::seed_from_u64(3), 4);
    let path = write(&dir, "nominal.json", &to_json(&problem_file(&problem)));
    let synth = stdout_json(&lfrtune(&["synth", s(&path)]));
    let nominal = stdout_json(&lfrtune(&["nominal", s(&path)]));
    let (a, b) = (synth["gamma"].as_f64().unwrap(), nominal["gamma"].as_f64().unwrap());
    assert!((a - b).abs() <= 0.05 * b, "synth {a} vs nominal {b}");
}

#[test]
fn explore_without_iterations_runs_no_experiments() {
    let dir = TempDir::new().unwrap();
    let (problem, secret, _) = fixture(&dir, 1);
    let report = stdout_json(&lfrtune(&["explore", s(&problem), s(&secret), "--n1", "0", "--n2", "0"]));
    assert_eq!(report["experiments"], 0);
    assert!(report["iterations"].as_array().unwrap().is_empty());
}

#[test]
fn default_exploration_accounts_for_thirty_six_cells() {
    let dir = TempDir::new().unwrap();
    let (problem, secret, inst) = fixture(&dir, 2);
    let out_path = dir.path().join("report.json");
    let out =
        lfrtune(&["explore", s(&problem), s(&secret), "--N", "6", "--n1", "3", "--n2", "3", "--output", s(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let experiments = report["experiments"].as_u64().unwrap();
    let skipped = report["skipped_cells"].as_u64().unwrap();
    assert_eq!(experiments + skipped, 36);
    for it in report["iterations"].as_array().unwrap() {
        for r in it["records"].as_array().unwrap() {
            assert!(r["gamma_eps"].is_number() || r["gamma_eps"].is_null());
            assert!(r["cell"]["intervals"].as_array().unwrap().len() == inst.delta0.len());
        }
    }
}

#[test]
fn synthesized_gain_feeds_the_norm_command() {
    let dir = TempDir::new().unwrap();
    let (problem, _, inst) = fixture(&dir, 4);
    let synth = stdout_json(&lfrtune(&["synth", s(&problem)]));
    let gain = write(&dir, "gain.json", &synth["gain"].to_string());
    let norm = stdout_json(&lfrtune(&["norm", s(&problem), "--delta", &delta_arg(&inst.delta0), "--gain", s(&gain)]));
    let gamma_eps = synth["gamma_eps"].as_f64().unwrap();
    assert!(norm["spectral_abscissa"].as_f64().unwrap() < 0.0);
    assert!(norm["norm"].as_f64().unwrap() <= gamma_eps * (1.0 + 1e-6));
    assert_eq!(synth["residuals"]["y_min"].as_f64().map(|v| v > 0.0), Some(true));
}

#[test]
fn synth_on_a_cell_and_sdp_dump() {
    let dir = TempDir::new().unwrap();
    let (problem, _, inst) = fixture(&dir, 5);
    let bbox = inst.problem.uncertainty_box();
    let cell: Vec<String> =
        bbox.intervals().iter().flat_map(|iv| [format!("{:e}", iv.lo), format!("{:e}", iv.center())]).collect();
    let dump = dir.path().join("sdp.txt");
    let cell_out = stdout_json(&lfrtune(&["synth", s(&problem), "--cell", &cell.join(","), "--dump-sdp", s(&dump)]));
    let full = stdout_json(&lfrtune(&["synth", s(&problem)]));
    assert!(cell_out["gamma"].as_f64().unwrap() <= full["gamma"].as_f64().unwrap() * (1.0 + 1e-6));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.starts_with("# scalars"));
}

#[test]
fn baselines_report_their_experiments() {
    let dir = TempDir::new().unwrap();
    let (problem, secret, _) = fixture(&dir, 6);
    for mode in ["gains", "delta"] {
        let out = stdout_json(&lfrtune(&["baseline", s(&problem), s(&secret), "--mode", mode, "--budget", "5"]));
        assert_eq!(out["mode"], mode);
        assert!(out["experiments"].as_u64().unwrap() <= 5);
        if mode == "delta" {
            assert!(out["violations"].as_array().unwrap().is_empty());
        }
    }
}

#[test]
fn check_campaign_passes_and_is_seeded() {
    let dir = TempDir::new().unwrap();
    let (problem, secret, _) = fixture(&dir, 7);
    let args = ["check", s(&problem), s(&secret), "--runs", "3", "--N", "3", "--n1", "1", "--n2", "1", "--seed", "9"];
    let a = stdout_json(&lfrtune(&args));
    let b = stdout_json(&lfrtune(&args));
    assert_eq!(a["passed"], true);
    assert_eq!(a["runs"].as_array().unwrap().len(), 3);
    assert_eq!(a, b);
}

#[test]
fn malformed_problem_exits_with_parse_error() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "bad.json", "{ \"plant\": { \"A\": [[1, 2], [3]] } }");
    let out = lfrtune(&["synth", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "parse");
    assert_eq!(err["exit_code"], 1);
}

#[test]
fn unknown_flags_exit_with_parse_error() {
    let out = lfrtune(&["synth", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "parse");
    assert!(lfrtune(&["--help"]).status.success());
}

#[test]
fn secret_outside_the_box_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let (problem, _, inst) = fixture(&dir, 8);
    let far: Vec<f64> = inst.delta0.iter().map(|_| 50.0).collect();
    let secret = write(&dir, "far.json", &to_json(&serde_json::json!({ "delta0": far })));
    let out = lfrtune(&["explore", s(&problem), s(&secret)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "parse");
}

#[test]
fn unstabilizable_plant_exits_as_infeasible() {
    let dir = TempDir::new().unwrap();
    let m = |r: usize, c: usize, v: &[f64]| Matrix::from_row_slice(r, c, v);
    let plant = LfrPlant::nominal(
        m(1, 1, &[1.0]),
        m(1, 1, &[1.0]),
        m(1, 1, &[0.0]),
        m(2, 1, &[1.0, 0.0]),
        m(2, 1, &[0.0, 0.0]),
        m(2, 1, &[0.0, 1.0]),
    )
    .unwrap();
    let problem =
        Problem::new(plant, UncertaintyStructure::new(vec![]).unwrap(), UncertaintyBox::new(vec![]).unwrap()).unwrap();
    let path = write(&dir, "unstable.json", &to_json(&problem_file(&problem)));
    let out = lfrtune(&["nominal", s(&path)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "infeasible");
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["feasible"], false);
}
