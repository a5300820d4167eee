use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kohnlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kohnlab"))
        .args(args)
        .env_remove("KOHNLAB_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "[basis]\nm = 4\n[scan]\nk_min = 0.2\nk_max = 0.8\ncount = 4\ntau_count = 8\n";

#[test]
fn scan_reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for (name, jobs) in [("a.json", "1"), ("b.json", "4"), ("c.csv", "1"), ("d.csv", "3")] {
        let out = dir.path().join(name);
        let o = kohnlab(&["scan", "--config", &cfg, "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[2], outputs[3]);
    let csv = String::from_utf8(outputs[2].clone()).unwrap();
    assert!(csv.starts_with("k,tau0,tau1,eta0,eta1,"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn seed_comes_from_the_environment_first() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("seed = 11\n{SMALL}"));
    let from_file = kohnlab(&["scan", "--config", &cfg]);
    let v: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(v["spec"]["seed"], 11);

    let from_env = Command::new(env!("CARGO_BIN_EXE_kohnlab"))
        .args(["scan", "--config", &cfg])
        .env("KOHNLAB_SEED", "99")
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&from_env.stdout).unwrap();
    assert_eq!(v["spec"]["seed"], 99);

    let bad = Command::new(env!("CARGO_BIN_EXE_kohnlab"))
        .args(["scan", "--config", &cfg])
        .env("KOHNLAB_SEED", "lots")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn solve_reports_the_optimized_and_complex_phase() {
    let o = kohnlab(&["solve", "--k", "0.5", "--tau", "0.4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let eta0 = v["analysis"]["optimum"]["eta0"].as_f64().unwrap();
    let re_c = v["complex_k"]["eta_v"][0].as_f64().unwrap();
    assert!((eta0 - re_c).abs() < 1e-10);
    assert_eq!(v["at_tau"]["tau"], 0.4);
    assert!(v["exact"]["eta_exact"].is_number());
}

#[test]
fn verify_exit_codes() {
    let ok = kohnlab(&["verify", "--k", "0.4", "--suites", "theta,gamma_sq"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS theta"));

    let dir = tempfile::tempdir().unwrap();
    let strict = write_config(dir.path(), "[verify.tolerances]\nslope_fd = 1e-30\n");
    let fail = kohnlab(&["verify", "--config", &strict, "--k", "0.4", "--suites", "slope_fd"]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL slope_fd"));
}

#[test]
fn verify_writes_json_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let o = kohnlab(&["verify", "--k", "0.5", "--suites", "routes", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v[0]["suite"], "routes");
    assert_eq!(v[0]["status"], "pass");
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "[scan]\nkmin = 0.1\n");
    assert_eq!(kohnlab(&["scan", "--config", &unknown]).status.code(), Some(2));
    assert_eq!(kohnlab(&["solve", "--k", "-1"]).status.code(), Some(2));
    assert_eq!(kohnlab(&["solve", "--k", "0.5", "--tau", "4"]).status.code(), Some(2));
    assert_eq!(kohnlab(&["verify", "--suites", "nonsense"]).status.code(), Some(2));
    assert_eq!(kohnlab(&["scan", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
    assert_eq!(kohnlab(&["frobnicate"]).status.code(), Some(2));
}
