use std::path::Path;
use std::process::{Command, Output};

fn tumorstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tumorstab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "grid_size = 61\nhorizon = 2.0\noutput_interval = 0.5\nlinear_response = false\n";

#[test]
fn check_kinetics_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = tumorstab(&["--out", dir.path().to_str().unwrap(), "check-kinetics"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("check,passed,worst_margin,worst_at\n"));
    assert!(text.lines().skip(1).all(|l| l.contains(",true,")));
    let table = std::fs::read_to_string(dir.path().join("kinetics.csv")).unwrap();
    assert_eq!(table.lines().count(), 12);
}

#[test]
fn bad_configs_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bogus = 1\n");
    assert_eq!(tumorstab(&["--config", &cfg, "stability"]).status.code(), Some(3));
    let cfg = write_config(dir.path(), "[perturbation]\namplitude = 0.5\n");
    assert_eq!(tumorstab(&["--config", &cfg, "stability"]).status.code(), Some(3));
    let cfg = write_config(dir.path(), "[kinetics]\nlambda = 100.0\nb_rate = 0.5\nd_rate = 1.0\np_rate = 0.4\nq_rate = 0.3\n");
    assert_eq!(tumorstab(&["--config", &cfg, "check-kinetics"]).status.code(), Some(3));
    assert_eq!(tumorstab(&["--config", "/nonexistent/run.toml", "stationary"]).status.code(), Some(3));
}

#[test]
fn nutrient_table_has_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid_size = 21\n");
    let out = tumorstab(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "nutrient", "--z", "-0.5"]);
    assert!(out.status.success());
    let table = std::fs::read_to_string(dir.path().join("nutrient.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("r,c,c_prime"));
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(last[0], "1.0000000000000000e0");
    assert_eq!(last[1], "1.0000000000000000e0");
}

#[test]
fn stability_manifest_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = tumorstab(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "stability"]);
    // A two-unit horizon is too short for a decay fit, so the run reports a failed experiment.
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = out_dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("config_hash"));
    let header = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(header.starts_with("t,z,R,normX,normX0,p_center,p_boundary\n"));

    let report = tumorstab(&["report", manifest.to_str().unwrap(), "--rerun"]);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    assert!(String::from_utf8_lossy(&report.stdout).contains("bit for bit"));

    let tampered = text.replacen("\"grid_size\": 61", "\"grid_size\": 63", 1);
    assert_ne!(tampered, text);
    std::fs::write(&manifest, tampered).unwrap();
    assert_eq!(tumorstab(&["report", manifest.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn simulate_writes_requested_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let table = dir.path().join("sim.csv");
    let out = tumorstab(&[
        "--config",
        &cfg,
        "simulate",
        "--amplitude",
        "0.01",
        "--shape",
        "bump",
        "--t-end",
        "1.0",
        "--output",
        table.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 4);
    assert!(dir.path().join("sim.json").exists());
}
