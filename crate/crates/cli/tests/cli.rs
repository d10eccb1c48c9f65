use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uqot_cli::io::{InstanceFile, ResultFile};

fn uqot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqot")).args(args).env_remove("UQOT_THREADS").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CLASSICAL: &str = r#"{
  "kind": "classical",
  "mu": [0.5, 1.5],
  "nu": [1.0, 0.25, 0.75],
  "cost": [[0.0, 1.0, 2.0], [1.0, 0.0, 0.5]],
  "epsilon": 0.1,
  "tau1": 1.0,
  "tau2": 2.0
}"#;

const QUANTUM: &str = r#"{
  "kind": "quantum",
  "d1": 2,
  "d2": 2,
  "C": [[[0.0, 0.0], [0.3, 0.1], [0.0, 0.0], [0.2, 0.0]],
        [[0.3, -0.1], [1.0, 0.0], [0.1, 0.2], [0.0, 0.0]],
        [[0.0, 0.0], [0.1, -0.2], [0.5, 0.0], [0.0, 0.1]],
        [[0.2, 0.0], [0.0, 0.0], [0.0, -0.1], [0.2, 0.0]]],
  "rho": [[[0.6, 0.0], [0.1, 0.1]], [[0.1, -0.1], [0.4, 0.0]]],
  "sigma": [[[0.3, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.7, 0.0]]],
  "epsilon": 0.2,
  "tau1": 1.0,
  "tau2": 1.0
}"#;

#[test]
fn classical_solve_prints_result() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "c.json", CLASSICAL);
    let o = uqot(&["solve-classical", "--instance", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: ResultFile = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.converged);
    assert!(r.gap.abs() <= 1e-7 * (1.0 + r.primal_value.abs()));
    assert_eq!(r.instance_sha256, uqot_cli::io::sha256_hex(CLASSICAL.as_bytes()));
}

#[test]
fn stored_couplings_reproduce_their_values() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text, cmd) in [("q.json", QUANTUM, "solve-quantum"), ("c.json", CLASSICAL, "solve-classical")] {
        let inst = write(dir.path(), name, text);
        let o = uqot(&[cmd, "--instance", inst.to_str().unwrap(), "--emit-coupling"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let r: ResultFile = serde_json::from_slice(&o.stdout).unwrap();
        let parsed = InstanceFile::parse(text).unwrap().validate().unwrap();
        let f = r.reevaluate_primal(&parsed).unwrap();
        assert!((f - r.primal_value).abs() <= 1e-9, "{cmd}: {f} vs {}", r.primal_value);
    }
}

#[test]
fn out_dir_gets_result_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "q.json", QUANTUM);
    let out = dir.path().join("run");
    let o =
        uqot(&["solve-quantum", "--instance", inst.to_str().unwrap(), "--emit-trace", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: ResultFile = serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert!(!r.trace.unwrap().is_empty());
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.starts_with(uqot_cli::io::SOLVE_CSV_HEADER));
}

#[test]
fn iteration_cap_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "q.json", QUANTUM);
    let o = uqot(&["solve-quantum", "--instance", inst.to_str().unwrap(), "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let r: ResultFile = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!r.converged);
}

#[test]
fn tau_sweep_rejects_unequal_traces() {
    let dir = tempfile::tempdir().unwrap();
    let unequal = QUANTUM.replace("[0.7, 0.0]", "[0.9, 0.0]");
    let inst = write(dir.path(), "q.json", &unequal);
    let o = uqot(&["sweep-tau", "--instance", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E060"), "{}", stderr(&o));
}

#[test]
fn zero_tau_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "c.json", &CLASSICAL.replace("\"tau1\": 1.0", "\"tau1\": 0.0"));
    let o = uqot(&["solve-classical", "--instance", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E040"));
}

#[test]
fn wrong_kind_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "c.json", CLASSICAL);
    let o = uqot(&["solve-quantum", "--instance", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E070"));
    let o = uqot(&["solve-quantum", "--instance", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E001"));
}

#[test]
fn sweep_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "q.json", QUANTUM);
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = uqot(&[
            "sweep-eps",
            "--instance",
            inst.to_str().unwrap(),
            "--schedule",
            "1,0.5,0.25,0.1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        csvs.push(std::fs::read(out.join("sweep.csv")).unwrap());
        assert!(out.join("sweep.json").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert_eq!(text.lines().next(), Some(uqot_cli::io::SWEEP_CSV_HEADER));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn bad_schedule_and_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "q.json", QUANTUM);
    let path = inst.to_str().unwrap();
    let o = uqot(&["sweep-eps", "--instance", path, "--schedule", "0.1,1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E070"));
    let o = uqot(&["sweep-eps", "--instance", path, "--schedule", "1,x"]);
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_uqot"))
        .args(["sweep-eps", "--instance", path])
        .env("UQOT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E080"));
}

#[test]
fn gradcheck_passes_on_a_valid_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "q.json", QUANTUM);
    let o = uqot(&["--seed", "3", "gradcheck", "--instance", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 21);
}

#[test]
fn selftest_filter() {
    let o = uqot(&["selftest", "--filter", "entropy"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS] entropy"));
    let o = uqot(&["selftest", "--filter", "no-such-suite"]);
    assert_eq!(o.status.code(), Some(1));
}
