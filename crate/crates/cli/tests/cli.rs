use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bohm-sim"));
    c.env("BOHM_SIM_THREADS", "1");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).arg("--quiet").output().expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn velocity_far_field_and_equivalence() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["velocity"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(d.path().join("velocity.csv")).unwrap();
    assert!(header.starts_with("t,x1,x2,v1_kg,v2_kg,v1_m,v2_m,rho1,rho2,j1,j2\n"));
    let r = rows(&d.path().join("velocity.csv"));
    let far = r.iter().find(|r| r[0] == -2.0 && (r[1] + 2.1).abs() < 1e-12 && (r[2] - 2.1).abs() < 1e-12).unwrap();
    assert!((far[3] - 1.0).abs() < 1e-10 && (far[4] + 1.0).abs() < 1e-10, "{far:?}");
    let mut finite = 0;
    for r in &r {
        if r[3].is_nan() {
            assert!(r[5].is_nan(), "node mismatch at {r:?}");
            continue;
        }
        finite += 1;
        // Both columns carry 13 significant digits.
        assert!((r[3] - r[5]).abs() < 1e-10 && (r[4] - r[6]).abs() < 1e-10, "{r:?}");
    }
    assert!(finite > 1000);
    assert!(d.path().join("config.json").exists());
}

#[test]
fn boosted_velocity_uses_primed_packets() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(&["velocity", "--theta", "0.4"], d.path()).status.success());
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["boost"], 0.4);
    let r = rows(&d.path().join("velocity.csv"));
    assert!(r.iter().any(|r| r[3].is_finite()));
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["snapshot", "--t", "-1", "--seed", "7"], d.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(run(&["trajectories", "--seed", "7"], d.path()).status.success());
    }
    for f in ["snapshot.csv", "trajectories.csv", "trajectories.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_config_reports_line() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, "{\n  \"schema_version\": 1,\n  \"packets\": {\n    \"k0_right\": 20,\n    \"sigma_right\": 0,\n    \"k0_left\": 20,\n    \"sigma_left\": 1\n  }\n}\n").unwrap();
    let o = bin().args(["velocity", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5") && err.contains("packets.sigma_right"), "{err}");

    std::fs::write(&cfg, "{\n  \"schema_version\": 1,\n  \"bogus\": 3\n}\n").unwrap();
    let o = bin().args(["velocity", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn config_round_trips_through_cli() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(&["metric", "--dispersion", "paraxial", "--kz", "2000"], d.path()).status.success());
    let first = std::fs::read_to_string(d.path().join("config.json")).unwrap();
    let e = tempfile::tempdir().unwrap();
    let o = bin().args(["metric", "--quiet", "--config"]).arg(d.path().join("config.json")).arg("--out").arg(e.path()).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let second = std::fs::read_to_string(e.path().join("config.json")).unwrap();
    assert_eq!(first.replace(&d.path().display().to_string(), ""), second.replace(&e.path().display().to_string(), ""));
    assert_eq!(std::fs::read(d.path().join("metric.csv")).unwrap(), std::fs::read(e.path().join("metric.csv")).unwrap());
}

#[test]
fn verify_exit_code_follows_report() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["verify"], d.path());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("verify.json")).unwrap()).unwrap();
    let passed = report["data"]["passed"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if passed { 0 } else { 1 }));
    assert!(report["data"]["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn boost_writes_both_paths() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["boost", "--theta", "0.2"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["boost_path_a.csv", "boost_path_b.csv", "boost.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    assert_eq!(run(&["boost"], d.path()).status.code(), Some(2));
}

#[test]
fn snapshot_outside_window_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["snapshot", "--t", "5"], d.path()).status.code(), Some(2));
}
