use std::path::Path;
use std::process::{Command, Output};

fn lcdeflate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcdeflate")).args(args).current_dir(cwd).output().expect("binary runs")
}

#[test]
fn check_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcdeflate(&["check"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 9, "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn coarse_run_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcdeflate(&["run", "--preset", "tilt_twist", "--levels", "0", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res/report.json")).unwrap()).unwrap();
    let solutions = report["solutions"].as_array().unwrap();
    assert!(!solutions.is_empty());
    assert_eq!(report["config"]["name"], "tilt_twist");
    for s in solutions {
        let table = std::fs::read_to_string(dir.path().join(format!("res/solution_{}.csv", s["id"]))).unwrap();
        assert_eq!(table.lines().count(), 290);
    }
}

#[test]
fn overrides_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcdeflate(
        &["run", "--preset", "tilt_twist", "--levels", "0", "--alpha", "0.5", "--set", "params.k2=2.9", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["deflation"]["alpha"], 0.5);
    assert_eq!(report["config"]["params"]["k2"], 2.9);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--preset", "smectic"][..],
        &["run", "--preset", "tilt_twist", "--set", "params.k9=1"],
        &["run", "--preset", "tilt_twist", "--set", "levels"],
        &["sweep", "--preset", "tilt_twist", "--param", "K2", "--from", "3", "--to", "2", "--steps", "4"],
        &["sweep", "--preset", "tilt_twist", "--param", "V", "--from", "0.7", "--to", "0.8", "--steps", "4"],
        &["frobnicate"],
    ] {
        let out = lcdeflate(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn coarse_sweep_writes_branch_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcdeflate(
        &["sweep", "--preset", "tilt_twist", "--param", "K2", "--from", "2.0", "--to", "3.0", "--steps", "3", "--levels", "0", "--out", "s"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("parameter,solution_id,theta_m,energy"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 3);
    assert!(rows.iter().all(|r| r[2].abs() <= std::f64::consts::FRAC_PI_2));
    // K2 = 2 lies below the onset: only the planar twist
    assert_eq!(rows.iter().filter(|r| r[0] == 2.0).count(), 1);
    assert!(dir.path().join("s/sweep.json").exists());
}
