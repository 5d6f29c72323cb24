//! End-to-end runs of the `zsgame` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

fn zsgame(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_zsgame")).args(args).output().expect("binary runs");
    (out.status.code().expect("exit code"), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, name: &str, config: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path.display().to_string()
}

fn run(sub: &str, config: &Value) -> (i32, String, TempDir) {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "config.json", config);
    let out = tmp.path().join("out");
    let (code, err) = zsgame(&[sub, "--config", &cfg, "--out", out.to_str().unwrap()]);
    (code, err, tmp)
}

/// Rows of a report CSV as header-keyed maps.
fn csv_rows(path: &Path) -> Vec<std::collections::BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines.map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

#[test]
fn scalar_both_structures_with_the_feedback_audit_passes() {
    let config = json!({"problem": {"name": "scalar_lq"}, "solver": {"structure": "both"}, "verify": {"theorem1": true}});
    let (code, err, tmp) = run("audit", &config);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&tmp.path().join("out/scalar_lq.report.csv"));
    assert_eq!(rows.len(), 1);
    for col in ["ol_residual", "fb_residual", "lambda_negation_max", "psi_max"] {
        assert!(num(&rows[0][col]) < 1e-8, "{col} = {}", rows[0][col]);
    }
    assert_eq!(rows[0]["theorem1_verdict"], "olne_certified");
    assert_eq!(rows[0]["converged"], "true");
}

#[test]
fn constrained_audit_without_constrained_solver_is_a_configuration_error() {
    let config = json!({"problem": {"name": "scalar_lq"}, "verify": {"theorem2": true}});
    let (code, err, tmp) = run("audit", &config);
    assert_eq!(code, 3);
    assert!(err.contains("theorem2"), "{err}");
    assert!(!tmp.path().join("out").exists(), "nothing may be written before validation passes");
}

#[test]
fn unicycle_feedback_audit_records_eigenvalues() {
    let config = json!({"problem": {"name": "unicycle_pursuit"}, "solver": {"structure": "feedback"}, "verify": {"theorem1": true}});
    let (code, err, tmp) = run("audit", &config);
    assert_eq!(code, 0, "{err}");
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/unicycle_pursuit.report.json")).unwrap()).unwrap();
    let verdict = &report["theorem1"]["verdict"];
    assert!(verdict["classification"].is_string());
    for side in ["fb_second_order", "ol_second_order"] {
        for agent in 0..2 {
            assert!(verdict[side][agent]["min_eig"].is_number(), "{side}");
        }
    }
    let rows = csv_rows(&tmp.path().join("out/unicycle_pursuit.report.csv"));
    assert!(num(&rows[0]["soc_min_eig_a1"]).is_finite() && num(&rows[0]["soc_min_eig_a2"]).is_finite());
    assert!(num(&rows[0]["cone_containment"]) <= 1e-10);
}

#[test]
fn identical_runs_write_identical_json() {
    let config = json!({
        "problem": {"name": "double_integrator_pursuit", "params": {"horizon": 8}},
        "verify": {"second_order": true, "theorem1": true},
        "output": {"emit_trajectory": true}
    });
    let (c1, _, a) = run("audit", &config);
    let (c2, _, b) = run("audit", &config);
    assert_eq!((c1, c2), (0, 0));
    let names = ["double_integrator_pursuit.report.json", "double_integrator_pursuit.feedback.policies.json", "double_integrator_pursuit.open_loop.trajectory.json"];
    for name in names {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let json = fs::read_to_string(a.path().join("out/double_integrator_pursuit.report.json")).unwrap();
    assert!(!json.contains("wall"));
}

#[test]
fn solver_failure_exits_two() {
    let config = json!({"problem": {"name": "unicycle_pursuit"}, "solver": {"structure": "feedback", "options": {"max_iters": 1}}});
    let (code, err, tmp) = run("solve", &config);
    assert_eq!(code, 2, "{err}");
    let rows = csv_rows(&tmp.path().join("out/unicycle_pursuit.report.csv"));
    assert_eq!(rows[0]["converged"], "false");
}

#[test]
fn violated_implication_exits_one() {
    // Long scalar horizons are feedback-sufficient but not open-loop sufficient.
    let config = json!({"problem": {"name": "scalar_lq", "params": {"horizon": 5}}, "verify": {"theorem1": true}});
    let (code, err, tmp) = run("audit", &config);
    assert_eq!(code, 1, "{err}");
    let rows = csv_rows(&tmp.path().join("out/scalar_lq.report.csv"));
    assert_eq!(rows[0]["theorem1_verdict"], "inconsistent");
    assert!((num(&rows[0]["soc_min_eig_a2"]) - 4.913).abs() < 1e-2);
}

#[test]
fn solve_ignores_the_audits_and_honours_the_format_flag() {
    let tmp = TempDir::new().unwrap();
    let config = json!({"problem": {"name": "scalar_lq", "params": {"horizon": 5}}, "verify": {"theorem1": true}});
    let cfg = write_config(tmp.path(), "c.json", &config);
    let out = tmp.path().join("out");
    let (code, err) = zsgame(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv", "--seed", "7"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.join("scalar_lq.report.csv").exists());
    assert!(!out.join("scalar_lq.report.json").exists());
    assert_eq!(csv_rows(&out.join("scalar_lq.report.csv"))[0]["theorem1_verdict"], "");
}

#[test]
fn bad_invocations_exit_three() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(zsgame(&["audit"]).0, 3);
    assert_eq!(zsgame(&["frobnicate"]).0, 3);
    let missing = tmp.path().join("missing.json");
    assert_eq!(zsgame(&["audit", "--config", missing.to_str().unwrap()]).0, 3);
    let cfg = write_config(tmp.path(), "c.json", &json!({"problem": {"name": "scalar_lq"}}));
    assert_eq!(zsgame(&["audit", "--config", &cfg, "--format", "xml"]).0, 3);
    let typo = write_config(tmp.path(), "t.json", &json!({"problem": {"name": "scalar_lq"}, "verfy": {}}));
    assert_eq!(zsgame(&["audit", "--config", &typo]).0, 3);
    let unknown = write_config(tmp.path(), "u.json", &json!({"problem": {"name": "lq9"}}));
    assert_eq!(zsgame(&["audit", "--config", &unknown]).0, 3);
    let bounded = write_config(tmp.path(), "b.json", &json!({"problem": {"name": "bounded_lq"}}));
    assert_eq!(zsgame(&["audit", "--config", &bounded]).0, 3);
    assert_eq!(zsgame(&["--help"]).0, 0);
}

#[test]
fn horizon_grid_sweep_gives_one_row_per_run() {
    let sweep = json!({"base": {"problem": {"name": "scalar_lq"}}, "grid": {"problem.params.horizon": [1, 2, 5, 10]}});
    let (code, err, tmp) = run("sweep", &sweep);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&tmp.path().join("out/sweep.csv"));
    let ks: Vec<&str> = rows.iter().map(|r| r["K"].as_str()).collect();
    assert_eq!(ks, ["1", "2", "5", "10"]);
    assert!(rows.iter().all(|r| r["converged"] == "true"));
    assert!(tmp.path().join("out/003_scalar_lq.report.json").exists());
}

#[test]
fn an_invalid_entry_does_not_stop_the_batch() {
    let sweep = json!({"configs": [
        {"problem": {"name": "scalar_lq"}},
        {"problem": {"name": "scalar_lq"}, "verify": {"theorem2": true}},
        {"problem": {"name": "double_integrator_pursuit"}}
    ]});
    let (code, _, tmp) = run("sweep", &sweep);
    assert_eq!(code, 3);
    let rows = csv_rows(&tmp.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1]["converged"], "false");
    assert_eq!(rows[1]["K"], "");
    for i in [0, 2] {
        assert_eq!(rows[i]["converged"], "true");
        assert!(num(&rows[i]["fb_residual"]) < 1e-8);
    }
    let bad: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/001_scalar_lq.report.json")).unwrap()).unwrap();
    assert_eq!(bad["exit_code"], 3);
    assert!(bad["error"].as_str().unwrap().contains("theorem2"));
}

#[test]
fn bounded_sweep_reports_complementarity_and_constrained_verdicts() {
    let sweep = json!({
        "base": {"problem": {"name": "bounded_lq"}, "solver": {"constrained": true}, "verify": {"theorem2": true}},
        "grid": {"problem.params.u2_upper": [0.125, 0.1], "problem.params.base_params": [{}, {"horizon": 2}]}
    });
    let (code, err, tmp) = run("sweep", &sweep);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&tmp.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r["strict_complementarity"], "true");
        assert_eq!(r["theorem2_verdict"], "pass");
    }
}
