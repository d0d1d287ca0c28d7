use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str], config: &str, env: &[(&str, &str)]) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_contact-hj"));
    cmd.args(args).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).arg("--quiet");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CLASSICAL: &str = r#"{"family": "classical", "grid": {"n": 200}, "dt": 1e-3}"#;

#[test]
fn verify_classical_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify"], CLASSICAL, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["passed"], true);
    let checks = r["residuals"].as_array().unwrap();
    assert!(checks.len() >= 10);
    for c in checks {
        assert_eq!(c["passed"], true, "{c}");
        assert!(c["measured"].is_number() && c["tolerance"].is_number());
    }
}

#[test]
fn ergodic_mechanical_critical_value() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["ergodic"], r#"{"family": "mechanical", "grid": {"n": 100}, "dt": 2e-3}"#, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    assert!((r["summary"]["c"].as_f64().unwrap() - 1.0).abs() <= 0.05);
    assert_eq!(r["summary"]["case_label"], "unique_c");
    assert!(dir.path().join("out/phi_inf.csv").exists());
    assert!(dir.path().join("out/critical.json").exists());
}

#[test]
fn malformed_configs_exit_one() {
    let dir = TempDir::new().unwrap();
    let bad_box = r#"{"family": "discounted", "grid": {"n": 50}, "dt": 1e-3, "box": {"a": -1, "b": 1, "delta": 1.0, "T": 1.0}}"#;
    let o = run(dir.path(), &["evolve"], bad_box, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("box.delta"), "{}", stderr(&o));

    for (cfg, field) in [
        (r#"{"family": "classical", "grid": {"n": 3}, "dt": 1e-3}"#, "grid.n"),
        (r#"{"family": "discounted", "params": {"lambda": 2.0}, "grid": {"n": 50}, "dt": 0.5}"#, "dt"),
        (r#"{"family": "classical", "grid": {"n": 50}, "dt": 1e-3, "colour": 1}"#, "colour"),
        (r#"{"family": "cubic", "grid": {"n": 50}, "dt": 1e-3}"#, "cubic"),
        (r#"{"family": "classical", "params": {"amp": 1}, "grid": {"n": 50}, "dt": 1e-3}"#, "params"),
        (r#"{"family": "classical", "grid": {"n": 50}, "dt": 1e-3, "phi": {"distance_to": [0.1, 0.2]}}"#, "phi.distance_to"),
    ] {
        let o = run(dir.path(), &["evolve"], cfg, &[]);
        assert_eq!(o.status.code(), Some(1), "{cfg}");
        assert!(stderr(&o).contains(field), "{field}: {}", stderr(&o));
    }
    let o = run(dir.path(), &["evolve"], CLASSICAL, &[("CONTACT_HJ_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"family": "classical", "grid": {"n": 100}, "dt": 1e-3, "horizon": 0.1, "fd": {"theta": 0.001}}"#;
    let o = run(dir.path(), &["oracle"], cfg, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let r = report(dir.path());
    assert!(r["error"].as_str().unwrap().contains("theta"));
}

#[test]
fn residual_over_tolerance_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"family": "classical", "grid": {"n": 100}, "dt": 2e-3, "horizon": 0.3, "direction": "backward",
                 "tolerances": {"viscosity": 0.0}}"#;
    let o = run(dir.path(), &["evolve"], cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    let r = report(dir.path());
    assert_eq!(r["passed"], false);
    assert!(r["residuals"].as_array().unwrap().iter().any(|c| c["passed"] == false));
}

#[test]
fn outputs_are_deterministic() {
    // coarse grid: the Markov tolerance is scaled up accordingly
    let cfg = r#"{"family": "discounted", "params": {"amp": 0.5}, "grid": {"n": 100}, "dt": 2e-3, "horizon": 0.2,
                 "x0": [0.3], "u0": 0.1, "tolerances": {"markov": 1e-2}}"#;
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for cmd in ["evolve", "action"] {
        assert_eq!(run(a.path(), &[cmd], cfg, &[]).status.code(), Some(0));
        assert_eq!(run(b.path(), &[cmd], cfg, &[("CONTACT_HJ_THREADS", "2")]).status.code(), Some(0));
        let r = report(a.path());
        for name in r["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).chain(["report.json"]) {
            let x = std::fs::read(a.path().join("out").join(name)).unwrap();
            let y = std::fs::read(b.path().join("out").join(name)).unwrap();
            assert!(x == y, "{cmd}: {name} differs");
        }
    }
    let csv = std::fs::read_to_string(a.path().join("out/action_forward.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x,h");
}

#[test]
fn seed_and_config_are_echoed() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"family": "classical", "grid": {"n": 50}, "dt": 2e-3, "horizon": 0.1, "seed": 5}"#;
    assert_eq!(run(dir.path(), &["oracle"], cfg, &[]).status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["seed"], 5);
    assert_eq!(r["config"]["grid"]["n"], 50);
    assert_eq!(r["subcommand"], "oracle");
    assert_eq!(run(dir.path(), &["oracle", "--seed", "9"], cfg, &[]).status.code(), Some(0));
    assert_eq!(report(dir.path())["seed"], 9);
}

#[test]
fn samples_file_as_initial_data() {
    let dir = TempDir::new().unwrap();
    let rows: String = (0..20).map(|i| format!("{i},{},{}\n", i as f64 / 20.0, if i < 10 { 0.0 } else { 1.0 })).collect();
    std::fs::write(dir.path().join("phi.csv"), format!("i,x,value\n{rows}")).unwrap();
    let cfg = r#"{"family": "discounted", "grid": {"n": 20}, "dt": 5e-3, "horizon": 0.1, "phi": {"samples": "phi.csv"},
                 "tolerances": {"viscosity": 1.0, "semigroup": 0.1}}"#;
    let o = run(dir.path(), &["evolve"], cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fin = std::fs::read_to_string(dir.path().join("out/final_backward.csv")).unwrap();
    assert_eq!(fin.lines().count(), 21);

    let wrong = cfg.replace("\"n\": 20", "\"n\": 40");
    let o = run(dir.path(), &["evolve"], &wrong, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("phi.samples"));
}

#[test]
fn bench_reports_timings() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"family": "coshcase", "grid": {"n": 50}, "dt": 2e-3, "horizon": 0.05}"#;
    assert_eq!(run(dir.path(), &["bench"], cfg, &[]).status.code(), Some(0));
    let r = report(dir.path());
    assert!(r["summary"]["seconds"]["dp_step"].as_f64().unwrap() > 0.0);
}
