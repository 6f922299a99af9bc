use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn catlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catlab"))
        .args(args)
        .env_remove("CATLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn small(cmd: &str, out: &Path) -> Vec<String> {
    let mut v: Vec<String> = [cmd, "--n-cells", "6", "--dt", "0.01", "--T", "0.3", "--out"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.push(out.display().to_string());
    v
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    catlab(&refs)
}

fn manifest_files(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("manifest.csv")).unwrap();
    text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect()
}

#[test]
fn forward_run_writes_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fwd");
    let mut args = small("forward", &out);
    args.extend(["--tau", "0.01", "--stride", "10", "--dump-mesh"].map(String::from));
    let res = run(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let files = manifest_files(&out);
    assert!(files.contains(&"forward_summary_tau1e-2.csv".to_string()), "{files:?}");
    assert!(files.contains(&"mesh.txt".to_string()));
    for f in &files {
        assert!(out.join(f).exists(), "{f}");
    }
    let traj = fs::read_to_string(out.join("forward_trajectory_tau1e-2.csv")).unwrap();
    assert!(traj.starts_with("step,time,v0,"));
    assert_eq!(traj.lines().count(), 1 + 4);
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("again");
    let args = small("forward", &out);
    assert!(run(&args).status.success());
    let second = run(&args);
    assert!(!second.status.success());
    assert!(String::from_utf8_lossy(&second.stderr).contains("--force"));
    let mut forced = args.clone();
    forced.push("--force".into());
    assert!(run(&forced).status.success());
}

#[test]
fn study_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("study{workers}"));
        let mut args = small("study", &out);
        args.extend(["--mode", "ocp", "--taus", "0.1,0.01", "--lambdas", "1", "--workers", workers].map(String::from));
        let res = run(&args);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(out);
    }
    let files = manifest_files(&outputs[0]);
    for name in [
        "ocp_control_L2L2_lambda1e0.csv",
        "ocp_state_L2H1_lambda1e0.svg",
        "ocp_iterations_tau1e-1_lambda1e0.csv",
        "ocp_iterations_tau0e0_lambda1e0.csv",
    ] {
        assert!(files.iter().any(|f| f == name), "{name} missing from {files:?}");
    }
    for f in files.iter().filter(|f| f.ends_with(".csv")) {
        let a = fs::read(outputs[0].join(f)).unwrap();
        let b = fs::read(outputs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between worker counts");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cfg");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("# forward sweep\ncommand = study\nmode = forward\nn_cells = 6\ndt = 0.01\nT = 0.2\ntaus = 0.1, 0.01\nout = {}\n", out.display()),
    )
    .unwrap();
    let res = catlab(&["--config", cfg.to_str().unwrap(), "--taus", "0.1,0.03,0.01"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("forward_state_L2H1.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(out.join("forward_velocity_L2L2.csv").exists());
}

#[test]
fn invalid_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let res = catlab(&["forward", "--n-cells", "6", "--dt=-1", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("dt"));
    assert!(!out.exists());
    assert!(!catlab(&[]).status.success());
}
