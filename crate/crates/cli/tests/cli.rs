use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_passivity-lab"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_reference_samples() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["simulate", "--paper-defaults", "--out", "t.csv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("t.csv")).unwrap();
    assert_eq!(text.lines().count(), 1001);

    let cfg = config(d.path(), "short.toml", "[sim]\nduration = 10.0\n");
    let o = run(d.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--out", "s.csv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 102);
}

#[test]
fn config_errors_exit_2() {
    let d = TempDir::new().unwrap();
    let bad = config(d.path(), "bad.toml", "[sim]\ninternal_step = 0.03\n");
    assert_eq!(code(&run(d.path(), &["simulate", "--config", bad.to_str().unwrap()])), 2);
    let unknown = config(d.path(), "unknown.toml", "[sim]\nstep = 0.01\n");
    assert_eq!(code(&run(d.path(), &["simulate", "--config", unknown.to_str().unwrap()])), 2);
    assert_eq!(code(&run(d.path(), &["simulate"])), 2);
    assert_eq!(code(&run(d.path(), &["simulate", "--config", "missing.toml"])), 2);
    assert_eq!(code(&run(d.path(), &["sweep", "--paper-defaults", "--windows", ""])), 2);
}

#[test]
fn identify_reference_and_infeasible() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["identify", "--paper-defaults", "--out", "r.json"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let r = json(&d.path().join("r.json"));
    assert_eq!(r["status"], "optimal");
    let m = r["margin"].as_f64().unwrap();
    assert!((m - 0.471).abs() <= 0.02, "{m}");
    assert_eq!(r["theta"].as_array().unwrap().len(), 9);
    assert_eq!(r["T"], 1);

    let noisy = config(d.path(), "noisy.toml", "[noise]\nsigma = 0.01\n");
    let o = run(d.path(), &["identify", "--config", noisy.to_str().unwrap(), "--out", "n.json"]);
    assert_eq!(code(&o), 3);
    let r = json(&d.path().join("n.json"));
    assert_eq!(r["status"], "infeasible");
    assert!(r["margin"].is_null());
}

#[test]
fn identify_is_deterministic_and_reads_trajectories() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "c.toml", "[noise]\nsigma = 0.01\nseed = 7\n[identification]\nwindow = 50\n");
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(d.path(), &["identify", "--config", c, "--out", "a.json"])), 0);
    assert_eq!(code(&run(d.path(), &["identify", "--config", c, "--out", "b.json"])), 0);
    let a = std::fs::read(d.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.json")).unwrap());

    assert_eq!(code(&run(d.path(), &["simulate", "--paper-defaults", "--out", "t.csv"])), 0);
    let o = run(d.path(), &["identify", "--paper-defaults", "--trajectory", "t.csv", "--out", "f.json"]);
    assert_eq!(code(&o), 0);
    let direct = run(d.path(), &["identify", "--paper-defaults", "--out", "g.json"]);
    assert_eq!(code(&direct), 0);
    let (f, g) = (json(&d.path().join("f.json")), json(&d.path().join("g.json")));
    assert_eq!(f["margin"], g["margin"]);
}

#[test]
fn sweep_finds_transition() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "c.toml", "[noise]\nsigma = 0.01\n");
    let o = run(d.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--out", "s.csv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("T,status,margin"));
    assert_eq!(lines.count(), 20);
    assert!(stdout(&o).contains("feasible from T = "));
}

#[test]
fn montecarlo_single_run_summary() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "c.toml", "[monte_carlo]\nruns = 1\n");
    let o = run(d.path(), &["montecarlo", "--config", cfg.to_str().unwrap(), "--out", "m.json"]);
    assert_eq!(code(&o), 0);
    let s = json(&d.path().join("m.json"));
    assert_eq!(s["runs"], 1);
    assert_eq!(s["margin_min"], s["margin_max"]);
    assert_eq!(s["margin_min"], s["margin_mean"]);
}

#[test]
fn doa_and_damping_from_result() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "c.toml", "[noise]\nsigma = 0.01\n[identification]\nwindow = 200\nstructural = true\n");
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(d.path(), &["identify", "--config", c, "--out", "r.json"])), 0);

    let o = run(d.path(), &["doa", "--config", c, "--result", "r.json", "--out", "d.json", "--lfs", "l.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let local = json(&d.path().join("d.json"))["c"].as_f64().unwrap();
    let levels = std::fs::read_to_string(d.path().join("d.levels.csv")).unwrap();
    assert!(levels.starts_with("c,x1,x2"));
    assert!(std::fs::read_to_string(d.path().join("l.csv")).unwrap().starts_with("t,lfs"));

    let o = run(d.path(), &["doa", "--config", c, "--result", "r.json", "--out", "w.json", "--whole-space"]);
    assert_eq!(code(&o), 0);
    let whole = json(&d.path().join("w.json"));
    assert!(whole["c"].as_f64().unwrap() > local);
    assert_eq!(whole["region_kind"], "whole_space");

    let o = run(d.path(), &["damping", "--config", c, "--result", "r.json", "--out", "damp.csv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("damp.csv")).unwrap();
    assert!(text.starts_with("t,S_open,S_closed_k0.5,S_closed_k1,S_closed_k2"), "{}", text.lines().next().unwrap());
}

#[test]
fn damping_with_zero_gain_matches_open_loop() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "c.toml", "[analysis]\ngains = [0.0]\n");
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(d.path(), &["identify", "--config", c, "--out", "r.json"])), 0);
    assert_eq!(code(&run(d.path(), &["damping", "--config", c, "--result", "r.json", "--out", "k0.csv"])), 0);
    let text = std::fs::read_to_string(d.path().join("k0.csv")).unwrap();
    for line in text.lines().skip(1) {
        let v: Vec<&str> = line.split(',').collect();
        assert_eq!(v[1], v[2]);
    }
}

#[test]
fn degenerate_inputs_exit_4() {
    let d = TempDir::new().unwrap();
    let noisy = config(d.path(), "noisy.toml", "[noise]\nsigma = 0.01\n");
    let n = noisy.to_str().unwrap();
    assert_eq!(code(&run(d.path(), &["identify", "--config", n, "--out", "inf.json"])), 3);
    assert_eq!(code(&run(d.path(), &["doa", "--config", n, "--result", "inf.json", "--out", "d.json"])), 4);

    assert_eq!(code(&run(d.path(), &["identify", "--paper-defaults", "--out", "r.json"])), 0);
    let path = d.path().join("r.json");
    let mut r = json(&path);
    for t in r["theta"].as_array_mut().unwrap() {
        *t = serde_json::json!(-1.0);
    }
    r["pruned"] = serde_json::Value::Null;
    std::fs::write(&path, r.to_string()).unwrap();
    assert_eq!(code(&run(d.path(), &["doa", "--paper-defaults", "--result", "r.json", "--out", "d.json"])), 4);
}

#[test]
fn certify_verdicts() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["certify", "--rho", "0.494", "--nu", "-0.3"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("certified"));
    let o = run(d.path(), &["certify", "--rho", "0.494", "--nu", "-0.6"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("not_certified"));
    let o = run(d.path(), &["certify", "--rho", "0.494", "--nu", "-0.494"]);
    assert!(stdout(&o).starts_with("not_certified"));

    assert_eq!(code(&run(d.path(), &["identify", "--paper-defaults", "--out", "r.json"])), 0);
    let o = run(d.path(), &["certify", "--result", "r.json", "--nu", "-0.3"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("certified"));
    assert_eq!(code(&run(d.path(), &["certify", "--nu", "0.1"])), 2);
}
