use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn coexist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coexist"))
        .args(args)
        .env_remove("COEXIST_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

fn sweep(dir: &Path, extra: &[&str]) -> Output {
    let desk = scenario("desk.toml");
    let out = dir.display().to_string();
    let mut args = vec!["sweep", desk.as_str(), "--seed", "3", "--trials", "500", "--out-dir", out.as_str()];
    args.extend_from_slice(extra);
    coexist(&args)
}

#[test]
fn validate_exit_codes() {
    assert_eq!(coexist(&["validate", &scenario("default.toml")]).status.code(), Some(0));
    assert_eq!(coexist(&["validate", "/nonexistent/scenario.toml"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[sweep]\nsigma_grid = [0.5, 1.5]\n").unwrap();
    let out = coexist(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.sigma_grid[1]"));

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "num_sc = [\n").unwrap();
    assert_eq!(coexist(&["validate", broken.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_writes_schema_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = sweep(dir.path(), &["--sigma-points", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("tradeoff.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("sigma,model,strategy,c,total_power_w,crb,rate_bps,rho_dl,goal_effectiveness,feasible")
    );
    assert_eq!(lines.count(), 3 * 3 * 2);
    assert!(dir.path().join("diagnostics.csv").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["seed"], 3);
    let outputs = manifest["outputs"].as_array().unwrap();
    let tradeoff = outputs.iter().find(|o| o["file"] == "tradeoff.csv").unwrap();
    let digest = tradeoff["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn sweep_is_reproducible_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert!(sweep(a.path(), &["--sigma-points", "5"]).status.success());
    assert!(sweep(b.path(), &["--sigma-points", "5"]).status.success());
    assert!(sweep(c.path(), &["--sigma-points", "5", "--jobs", "1"]).status.success());
    for name in ["tradeoff.csv", "diagnostics.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
        assert_eq!(x, fs::read(c.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn heaviest_model_rows_agree_between_strategies() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sweep(dir.path(), &["--sigma-points", "4"]).status.success());
    let csv = fs::read_to_string(dir.path().join("tradeoff.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let vit: Vec<_> = rows.iter().filter(|r| r[1] == "vit_b_16").collect();
    assert!(!vit.is_empty());
    for pair in vit.chunks(2) {
        assert_eq!(pair[0][2], "aware");
        assert_eq!(pair[1][2], "unaware");
        assert_eq!(pair[0][3..], pair[1][3..]);
    }
}

#[test]
fn solve_prints_json() {
    let out = coexist(&["solve", &scenario("desk.toml"), "--model", "resnet50", "--sigma", "1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["feasible"], true);
    assert_eq!(v["c"], 4);
    assert!(v["total_power_w"].as_f64().unwrap() > 0.0);

    let unknown = coexist(&["solve", &scenario("desk.toml"), "--model", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn simulate_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = coexist(&[
        "simulate",
        &scenario("desk.toml"),
        "--model",
        "resnet50",
        "--c",
        "8",
        "--batches",
        "5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let batches = fs::read_to_string(dir.path().join("batches.csv")).unwrap();
    assert_eq!(batches.lines().count(), 1 + 5);
    assert!(dir.path().join("frames.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn verify_exit_codes() {
    assert_eq!(coexist(&["verify", "--instances", "20"]).status.code(), Some(0));
    assert_eq!(coexist(&["verify", "--instances", "0"]).status.code(), Some(0));
    assert_eq!(
        coexist(&["verify", "--instances", "20", "--inject-fault", "1.01"]).status.code(),
        Some(3)
    );
    assert_eq!(coexist(&["verify", "--max-f", "7"]).status.code(), Some(2));
}
