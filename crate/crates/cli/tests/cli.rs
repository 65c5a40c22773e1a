use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "geometry": {"rows": 2, "cols": 3, "partition": {"explicit": {"tx": [1, 2, 4, 5], "rx": [0, 3]}}},
  "bits": 2,
  "pmax_dbm": -8.0,
  "grid": {"theta_deg": [0, 20], "phi_deg": [0, 90]},
  "designers": ["proposed", "sequential"]
}"#;

fn ibfd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibfd")).current_dir(dir).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) {
    std::fs::write(dir.join("small.json"), SMALL).unwrap();
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn gen_channel_round_trips_through_design() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let out = ibfd(dir.path(), &["gen-channel", "--config", "small.json", "--out", "h.txt"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("h.txt")).unwrap();
    assert!(text.starts_with("2,4\n"));

    let args = ["design", "--config", "small.json", "--designers", "cbf", "--no-pmax", "--out"];
    assert!(ibfd(dir.path(), &[&args[..], &["a.json"]].concat()).status.success());
    let with_file = [&args[..], &["b.json", "--channel-file", "h.txt"]].concat();
    assert!(ibfd(dir.path(), &with_file).status.success());
    let (a, b) = (json(dir.path(), "a.json"), json(dir.path(), "b.json"));
    let si = |v: &Value| v["results"][0]["report"]["max_si_dbm"].as_f64().unwrap();
    assert!((si(&a) - si(&b)).abs() < 1e-9);
}

#[test]
fn invalid_partition_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("[0, 3]", "[0, 1]");
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = ibfd(dir.path(), &["design", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_designer_and_bad_bits_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ibfd(dir.path(), &["design", "--designers", "genetic"]).status.code(), Some(1));
    assert_eq!(ibfd(dir.path(), &["design", "--bits", "0"]).status.code(), Some(1));
}

#[test]
fn quantized_cbf_at_boresight_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let out = ibfd(dir.path(), &["design", "--designers", "quantized_cbf", "--no-pmax", "--theta-deg", "0", "--phi-deg", "0"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let r = &v["results"][0];
    assert_eq!(r["status"], "solved");
    let idx = r["weights"]["phase_indices"].as_array().unwrap();
    assert_eq!(idx.len(), 36);
    assert!(idx.iter().all(|k| k == 0));
    let gain = r["report"]["gain_db"].as_f64().unwrap();
    assert!((gain - 10.0 * 36f64.log10()).abs() < 1e-9);
}

#[test]
fn infeasible_design_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let out = ibfd(dir.path(), &["design", "--config", "small.json", "--pmax-dbm", "-200", "--out", "d.json"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(dir.path(), "d.json");
    assert_eq!(v["results"][0]["status"], "infeasible");
}

#[test]
fn oracle_reports_gap_and_refuses_large_arrays() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let out = ibfd(dir.path(), &["oracle", "--config", "small.json", "--out", "o.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(dir.path(), "o.json");
    assert_eq!(v["enumerated"], 64);
    assert!(v["best"]["gain_db"].as_f64().unwrap() > 0.0);
    for g in v["gaps"].as_array().unwrap() {
        assert!(g["gap_db"].as_f64().unwrap().abs() < 1e-9);
    }

    let out = ibfd(dir.path(), &["oracle"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("16^35"), "{msg}");
}

#[test]
fn sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let run = |name: &str| {
        let out = ibfd(dir.path(), &["sweep", "--config", "small.json", "--out", name]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(dir.path().join(name)).unwrap(), String::from_utf8(out.stdout).unwrap())
    };
    let (a, summary) = run("a.csv");
    let (b, _) = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "direction_theta_deg,direction_phi_deg,designer,gain_db,max_si_dbm,feasible,solver_status,beta_star_rad,wall_time_ms,si_dbm_1,si_dbm_2"
    );
    assert_eq!(lines.count(), 8);
    assert!(summary.lines().any(|l| l.starts_with("proposed: cells 4")));
    assert!(summary.lines().any(|l| l.starts_with("sequential: cells 4")));
}

#[test]
fn sweep_without_out_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    assert_eq!(ibfd(dir.path(), &["sweep", "--config", "small.json"]).status.code(), Some(1));
}
