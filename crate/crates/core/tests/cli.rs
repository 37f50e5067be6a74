use std::fs;
use std::path::Path;
use std::process::Command;

use safety_filters::cli::{
    EXIT_BUDGET_EXCEEDED, EXIT_CONFIG, EXIT_DEPLOYMENT_REJECTED, EXIT_NOT_CONVERGED, EXIT_OK,
};
use serde_json::Value;

fn config(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

/// Runs the binary on `text` and returns the exit code and the JSON summary line.
fn run(command: &str, text: &str, dir: &Path) -> (i32, Value) {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_safety-filters"))
        .args([command, "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let summary = serde_json::from_str(stdout.lines().last().expect("summary line")).unwrap();
    (out.status.code().unwrap(), summary)
}

#[test]
fn uncertified_start_exits_with_deployment_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("wall_cbf.toml").replace("start_lower = [0.3, -2.0]\nstart_upper = [3.0, 2.0]", "x0 = [0.05, -2.5]");
    let (code, summary) = run("run", &text, dir.path());
    assert_eq!(code, EXIT_DEPLOYMENT_REJECTED, "{summary}");
    assert_eq!(summary["exit_code"], EXIT_DEPLOYMENT_REJECTED);
}

#[test]
fn negative_tolerance_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("wall_lr.toml").replace("tolerance = 1e-6", "tolerance = -1.0");
    let (code, summary) = run("solve", &text, dir.path());
    assert_eq!(code, EXIT_CONFIG);
    assert!(summary["error"].as_str().unwrap().contains("tolerance"), "{summary}");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let status = Command::new(env!("CARGO_BIN_EXE_safety-filters"))
        .args(["run", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(EXIT_CONFIG));
}

#[test]
fn unknown_subcommand_is_a_config_error() {
    let status = Command::new(env!("CARGO_BIN_EXE_safety-filters")).arg("launch").output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_CONFIG));
}

#[test]
fn capped_sweeps_exit_not_converged_and_still_write_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("wall_lr.toml").replace("max_iters = 5000", "max_iters = 2").replace("[481, 193]", "[41, 21]");
    let (code, summary) = run("solve", &text, dir.path());
    assert_eq!(code, EXIT_NOT_CONVERGED);
    assert_eq!(summary["converged"], false);
    assert_eq!(summary["iterations"], 2);
    assert!(dir.path().join("out/value.grid").exists());
}

#[test]
fn run_writes_metrics_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("wall_cbf.toml").replace("episodes = 20", "episodes = 3").replace("steps = 200", "steps = 50");
    let (code, summary) = run("run", &text, dir.path());
    assert_eq!(code, EXIT_OK, "{summary}");
    let metrics = fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let episodes = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("episode_"))
        .count();
    assert_eq!(episodes, 3);
}

#[test]
fn compare_emits_one_row_per_filter() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("compare_wall.toml").replace("episodes = 20", "episodes = 2").replace("steps = 200", "steps = 60");
    let (code, summary) = run("compare", &text, dir.path());
    assert_eq!(code, EXIT_OK, "{summary}");
    let table = fs::read_to_string(dir.path().join("out/comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 4, "{table}");
}

#[test]
fn verify_accepts_the_tube_mpc_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (code, summary) = run("verify", &config("scalar_tube.toml"), dir.path());
    assert_eq!(code, EXIT_OK, "{summary}");
    assert!(summary["counterexample"].is_null());
    assert_eq!(summary["error_bound_containment"]["failures"], 0);
    assert!(dir.path().join("out/verify_report.json").exists());
}

#[test]
fn verify_stops_before_an_oversized_search() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("scalar_tube.toml").replace("horizon = 8", "horizon = 40\nbudget = 1000");
    let (code, _) = run("verify", &text, dir.path());
    assert_eq!(code, EXIT_BUDGET_EXCEEDED);
}
