use std::path::Path;
use std::process::{Command, Output};

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim")).args(args).output().unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr is empty");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

fn run_verb(verb: &str, extra: &[&str], files: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec![verb, "--out", out, "--seed", "3"];
    args.extend_from_slice(extra);
    let res = qkdsim(&args);
    assert!(res.status.success(), "{verb}: {}", String::from_utf8_lossy(&res.stderr));
    for f in ["config.toml", "summary.txt"].iter().chain(files) {
        let p = dir.path().join(f);
        assert!(p.is_file(), "{verb} did not write {f}");
        assert!(std::fs::metadata(&p).unwrap().len() > 0, "{verb} wrote an empty {f}");
    }
    let resolved = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 3"));
}

#[test]
fn simulate_writes_session_and_events() {
    run_verb("simulate", &["--mode", "mc", "--events", "100000", "--override", "session.duration=0.01"], &[
        "session.csv",
        "events.csv",
    ]);
}

#[test]
fn events_have_the_columnar_layout() {
    let dir = tempfile::tempdir().unwrap();
    let res = qkdsim(&["simulate", "--out", dir.path().to_str().unwrap(), "--events", "50000", "--override", "session.launch.external_mu=1.0"]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "symbol_index,detector_id,gate_flag");
}

#[test]
fn sweeps_run() {
    run_verb("sweep-ob", &["--mode", "analytic"], &["sweep_ob.csv"]);
    run_verb("sweep-reach", &["--mode", "analytic"], &["sweep_reach.csv"]);
    run_verb("sweep-channel", &["--mode", "analytic"], &["sweep_channel.csv"]);
}

#[test]
fn longrun_calibrate_fit_run() {
    run_verb("longrun", &["--mode", "analytic"], &["longrun.csv"]);
    run_verb("calibrate", &["--override", "calibrate.trials=10"], &["calibration.csv"]);
    run_verb("fit", &[], &["fit_residuals.csv", "fitted_overrides.txt"]);
}

#[test]
fn seeded_runs_are_reproducible() {
    let read = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let res = qkdsim(&["simulate", "--mode", "mc", "--seed", seed, "--out", dir.path().to_str().unwrap(), "--override", "session.duration=0.02"]);
        assert!(res.status.success());
        std::fs::read_to_string(dir.path().join("session.csv")).unwrap()
    };
    assert_eq!(read("5"), read("5"));
    assert_ne!(read("5"), read("6"));
}

#[test]
fn config_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("in.toml");
    std::fs::write(&cfg, "[session]\nmode = \"analytic\"\nintrinsic_error = 0.02\n").unwrap();
    let out = dir.path().join("out");
    let res = qkdsim(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("intrinsic_error = 0.02"));
}

fn assert_error(args: &[&str], code: i32, kind: &str) {
    let res = qkdsim(args);
    assert_eq!(res.status.code(), Some(code), "{args:?}");
    let rec = error_record(&res);
    assert_eq!(rec["error"]["kind"], kind, "{rec}");
    assert!(rec["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[test]
fn failures_emit_a_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = Path::new(out).join("nope.toml");
    assert_error(&["simulate", "--out", out, "--config", missing.to_str().unwrap()], 2, "io");
    assert_error(&["simulate", "--out", out, "--override", "session.nonsense=1"], 2, "config");
    assert_error(&["simulate", "--out", out, "--override", "novalue"], 2, "config");
    assert_error(&["simulate", "--out", out, "--mode", "quantum"], 2, "config");
    assert_error(&["fit", "--out", out, "--override", "fit.lab_rkr=1e12"], 1, "fit");
    assert_error(&["teleport"], 2, "usage");
}
