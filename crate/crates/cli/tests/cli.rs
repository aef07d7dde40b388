use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn codazzi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codazzi"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("CODAZZI_SEED")
        .env_remove("CODAZZI_GRID")
        .output()
        .expect("binary runs")
}

#[test]
fn same_config_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = codazzi(&["core", "holonomy", "--format", "json,csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(dir.path().join("report.json")).unwrap();
    let csv = fs::read(dir.path().join("checks.csv")).unwrap();
    assert!(codazzi(&["holonomy", "core", "--format", "json,csv"], dir.path()).status.success());
    assert_eq!(fs::read(dir.path().join("report.json")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("checks.csv")).unwrap(), csv);
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["suite"], "core+holonomy");
    assert_eq!(report["config"]["seed"], 1);
    for key in ["version", "conventions", "checks"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    let check = &report["checks"][0];
    for key in ["id", "identity", "measured", "expected", "tol", "pass"] {
        assert!(check.get(key).is_some(), "{key}");
    }
}

#[test]
fn empty_suite_list_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = codazzi(&[], dir.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 0);
}

#[test]
fn failures_and_bad_input_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = codazzi(&["core", "--tol-alg", "1e-30"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL core."));
    assert_eq!(codazzi(&["nonsense"], dir.path()).status.code(), Some(2));
    assert_eq!(codazzi(&["core", "--grid", "1/2"], dir.path()).status.code(), Some(2));
    let file = dir.path().join("file");
    fs::write(&file, "").unwrap();
    let out = codazzi(&["core"], &file.join("sub"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sub"));
}

#[test]
fn flags_override_environment_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 3, "margin": 0.25}"#).unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_codazzi"));
        cmd.args(["core", "--config"]).arg(&cfg).args(extra).arg("--out").arg(dir.path()).env_remove("CODAZZI_SEED");
        if let Some(seed) = env {
            cmd.env("CODAZZI_SEED", seed);
        }
        assert!(cmd.output().unwrap().status.success());
        let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
        (report["config"]["seed"].as_u64().unwrap(), report["config"]["margin"].as_f64().unwrap())
    };
    assert_eq!(run(&[], None), (3, 0.25));
    assert_eq!(run(&[], Some("5")), (5, 0.25));
    assert_eq!(run(&["--seed", "7"], Some("5")), (7, 0.25));
}

#[test]
fn pairing_csv_and_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = codazzi(&["pairing", "cone", "--format", "csv,gnuplot"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["pairing_wedge.csv", "pairing_trace_half.csv", "pairing_cup.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 6, "{name}");
        assert!(text.lines().all(|l| l.split(',').count() == 6));
    }
    let ratios = fs::read_to_string(dir.path().join("pairing_ratios.csv")).unwrap();
    assert_eq!(ratios.lines().count(), 16);
    let dat: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "dat"))
        .collect();
    // L² and peripheral profiles per cone angle, one tip profile, the wedge sweep
    assert_eq!(dat.len(), 8);
}
