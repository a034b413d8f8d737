use std::path::{Path, PathBuf};
use std::process::Command;

use cosserat_observer::harness::{run_scenario, synthesize_ground_truth, Config, Scenario};
use cosserat_observer::observers::ObserverVariant;

const BIN: &str = env!("CARGO_BIN_EXE_cosserat-observer");

fn small_config() -> String {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/balanced_release.toml")).unwrap();
    text.replace("node_count = 30", "node_count = 10")
        .replace("duration_s = 1.0", "duration_s = 0.1")
        .replace("gammas = [0.2, 0.5, 1.0, 2.0, 4.0]", "gammas = [0.5, 1.0, 2.0]")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn simulate_writes_one_row_per_node_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small_config());
    let out = dir.path().join("sim");
    let (code, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    // 0.1 s / 5 ms = 20 steps, plus the initial state.
    let rows = csv_rows(&out.join("states.csv"));
    assert_eq!(rows.len(), 21 * 10);
    assert_eq!(rows[0].len(), 2 + 19 + 6);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"], 20);
    assert!(out.join("measurements.csv").exists());
}

#[test]
fn observe_and_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small_config());
    let c = cfg.to_str().unwrap();
    let obs = dir.path().join("obs");
    let (code, err) = run(&["observe", "--config", c, "--out", obs.to_str().unwrap(), "--variant", "tipD", "--gamma", "0.5", "--seed", "9"]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(obs.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["variant"], "tipD");
    assert_eq!(report["gamma"], 0.5);
    assert_eq!(report["seed"], 9);
    assert_eq!(csv_rows(&obs.join("states.csv")).len(), 21 * 10);

    let sw = dir.path().join("sweep");
    let (code, err) = run(&["sweep", "--config", c, "--out", sw.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&sw.join("sweep.csv"));
    assert_eq!(rows.len(), 3 * 3);
}

#[test]
fn single_gamma_sweep_matches_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config();
    let cfg = write_config(dir.path(), "c.toml", &text);
    let sw = dir.path().join("sweep");
    let (code, err) = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", sw.to_str().unwrap(), "--variant", "combined", "--gamma", "1.0"]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sw.join("report.json")).unwrap()).unwrap();
    let row = &report["rows"][0];
    let seed = row["seed"].as_u64().unwrap();

    let scenario = Scenario::new(Config::from_toml_str(&text).unwrap()).unwrap();
    let truth = synthesize_ground_truth(&scenario).unwrap();
    let direct = run_scenario(&scenario, &truth, ObserverVariant::Combined, 1.0, seed).unwrap();
    let settle = direct.report.settle_time_s;
    assert_eq!(row["settle_time_s"].as_f64(), settle);
    let e = &row["post_settle_errors"];
    assert_eq!(e["tip_position_m"].as_f64().unwrap(), direct.report.post_settle_errors.tip_position_m);
}

#[test]
fn gains_writes_mu_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scalar_mu_tip.toml");
    let out = dir.path().join("g");
    let (code, err) = run(&["gains", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&out.join("mu.csv"));
    assert!(!rows.is_empty());
    let flagged: Vec<f64> = rows.iter().filter(|r| &r[2] == "1").map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(flagged, vec![1.7]);
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small_config());
    let c = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(run(&["observe", "--config", c, "--out", d.to_str().unwrap(), "--variant", "combined"]).0, 0);
    }
    assert_eq!(std::fs::read(a.join("states.csv")).unwrap(), std::fs::read(b.join("states.csv")).unwrap());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["simulate", "--config", missing.to_str().unwrap()]).0, 2);
    let bad = write_config(dir.path(), "bad.toml", &small_config().replace("schema_version = 1", "schema_version = 7"));
    assert_eq!(run(&["simulate", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).0, 2);
    let unknown = write_config(dir.path(), "u.toml", &format!("{}\n[extra]\nx = 1\n", small_config()));
    assert_eq!(run(&["simulate", "--config", unknown.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).0, 2);
    let good = write_config(dir.path(), "c.toml", &small_config());
    assert_eq!(run(&["observe", "--config", good.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--variant", "bogus"]).0, 2);
    assert_eq!(run(&["simulate"]).0, 2);
}

#[test]
fn nonconvergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config()
        .replace("residual_tolerance = 1e-6", "residual_tolerance = 1e-15")
        .replace("max_newton_iterations = 50", "max_newton_iterations = 2");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let (code, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
}
