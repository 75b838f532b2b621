//! End-to-end runs of the `tspid` binary, one or more per exit code.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use tempfile::TempDir;
use tspid_core::simulation::benchmarks::benchmark_pendulum;

fn tspid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tspid"))
        .args(args)
        .env_remove("TSPID_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_pendulum(dir: &Path) -> Output {
    tspid(&["synth", "--benchmark", "pendulum", "--out", path(dir)])
}

#[test]
fn synth_check_simulate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("synth");
    let o = synth_pendulum(&out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "result.json",
        "report.txt",
        "metadata.json",
        "trace_probe_000.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let result = out.join("result.json");
    let check = tmp.path().join("check");
    let o = tspid(&[
        "check",
        "--benchmark",
        "pendulum",
        "--result",
        path(&result),
        "--out",
        path(&check),
    ]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(check.join("certificate.txt"))
        .unwrap()
        .starts_with("certificate: pass"));
    let sim = tmp.path().join("sim");
    let o = tspid(&[
        "simulate",
        "--benchmark",
        "pendulum",
        "--result",
        path(&result),
        "--out",
        path(&sim),
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(sim.join("undisturbed.csv")).unwrap();
    assert!(csv.starts_with("time,x1,x2,xk1,xk2,u1,w1,z1,alpha1,alpha2\n"));
    assert!(sim.join("disturbed.csv").exists());
}

#[test]
fn unstabilizable_benchmark_exits_2() {
    let tmp = TempDir::new().unwrap();
    let o = tspid(&["synth", "--benchmark", "tora", "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(fs::read_to_string(tmp.path().join("report.txt"))
        .unwrap()
        .starts_with("infeasible"));
}

#[test]
fn badly_scaled_model_exits_3() {
    let tmp = TempDir::new().unwrap();
    let mut m = benchmark_pendulum().model;
    for r in m.rules.iter_mut() {
        r.a *= 1e12;
        r.b2 /= 1e12;
    }
    let file = tmp.path().join("scaled.json");
    fs::write(&file, m.to_json_string()).unwrap();
    let out = tmp.path().join("out");
    let o = tspid(&[
        "synth",
        "--model",
        path(&file),
        "--tau",
        "6",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .starts_with("numerical failure"));
}

#[test]
fn open_loop_pendulum_diverges_with_exit_4() {
    let tmp = TempDir::new().unwrap();
    let o = tspid(&[
        "simulate",
        "--benchmark",
        "pendulum",
        "--gains",
        "zero",
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&o), 4);
    let partial = fs::read_to_string(tmp.path().join("undisturbed.csv")).unwrap();
    assert!(partial.lines().count() > 2);
}

#[test]
fn zero_gains_fail_the_certificate() {
    let tmp = TempDir::new().unwrap();
    let o = tspid(&[
        "check",
        "--benchmark",
        "pendulum",
        "--gains",
        "zero",
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(fs::read_to_string(tmp.path().join("certificate.txt"))
        .unwrap()
        .starts_with("certificate: fail"));
}

#[test]
fn missing_model_file_exits_1() {
    let o = tspid(&["synth", "--model", "/nonexistent/model.json", "--tau", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr)
        .contains("model file not found: /nonexistent/model.json"));
}

#[test]
fn bad_settings_exit_1() {
    assert_eq!(
        code(&tspid(&[
            "synth",
            "--benchmark",
            "pendulum",
            "--eta",
            "1.5"
        ])),
        1
    );
    assert_eq!(
        code(&tspid(&["synth", "--benchmark", "pendulum", "--tau", "-1"])),
        1
    );
    assert_eq!(
        code(&tspid(&[
            "simulate",
            "--benchmark",
            "pendulum",
            "--gains",
            "zero",
            "--x0",
            "1,2,3"
        ])),
        1
    );
    assert_eq!(code(&tspid(&["synth", "--benchmark", "nope"])), 1);
}

#[test]
fn validate_sorts_findings_by_kind() {
    assert_eq!(code(&tspid(&["validate", "--benchmark", "pendulum"])), 0);
    // the printed quadruple membership leaves the simplex
    assert_eq!(code(&tspid(&["validate", "--benchmark", "tora"])), 2);
    let tmp = TempDir::new().unwrap();
    let mut m = benchmark_pendulum().model;
    m.rules[1].b2 = DMatrix::zeros(3, 1);
    let file = tmp.path().join("bad.json");
    fs::write(&file, m.to_json_string()).unwrap();
    let o = tspid(&["validate", "--model", path(&file), "--tau", "1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn flags_override_config_over_defaults() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"benchmark": "pendulum", "tau": 3.0, "eta": 0.2}"#).unwrap();
    let out = tmp.path().join("out");
    let o = tspid(&[
        "check",
        "--config",
        path(&cfg),
        "--tau",
        "4",
        "--gains",
        "zero",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 2);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["tau"], 4.0);
    assert_eq!(meta["config"]["eta"], 0.2);
    assert_eq!(meta["config"]["horizon"], 20.0);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tspid"))
        .args(["check", "--benchmark", "pendulum", "--gains", "zero"])
        .env("TSPID_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(tmp.path().join("certificate.txt").exists());
}

/// Trace rows without the wall-time column.
fn trace_without_time(p: &Path) -> Vec<String> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn repeated_synthesis_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&synth_pendulum(&a)), 0);
    assert_eq!(code(&synth_pendulum(&b)), 0);
    for f in ["result.json", "report.txt"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let t = "trace_probe_000.csv";
    assert_eq!(
        trace_without_time(&a.join(t)),
        trace_without_time(&b.join(t))
    );
}
