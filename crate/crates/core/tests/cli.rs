use std::path::Path;
use std::process::{Command, Output};

use lidar_derain::eval::ResultsTable;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lidar-derain")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["bench", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--no-timing"));
}

#[test]
fn usage_error_is_one_line_naming_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["simulate", "--scene", "minimal", "--rate", "zero"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("--rate"), "{err}");
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["derain", "--in", "no/such/scan.bin", "--kind", "dsor", "--out-mask", "m.mask"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/scan.bin"));
}

#[test]
fn simulate_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = cli(dir, &["simulate", "--scene", "minimal", "--calib", "desk-small", "--rate", "10", "--seed", "7"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["clean/scan_000000.bin", "clean/scan_000000.label", "rain/scan_000000.bin", "rain/scan_000000.label"] {
        let x = std::fs::read(a.path().join("simulated").join(file)).unwrap();
        let y = std::fs::read(b.path().join("simulated").join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file}");
    }
}

#[test]
fn bench_csv_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for d in ["medium", "heavy"] {
        let out = cli(p, &["simulate", "--scene", "corridor", "--calib", "desk-small", "--density", d, "--frames", "2", "--out-dir", &format!("data/{d}")]);
        assert!(out.status.success());
    }
    let out = cli(p, &["bench", "--data", "data", "--filter", "sor,dsor", "--no-timing"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let table = ResultsTable::from_csv(&csv).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.to_csv(), csv);
}

#[test]
fn scene_json_feeds_simulate_and_annotate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(cli(p, &["scene", "--name", "corridor", "--out", "s.json"]).status.success());
    assert!(cli(p, &["scene", "--name", "corridor", "--annotation", "--calib", "desk-small", "--out", "a.json"]).status.success());
    assert!(cli(p, &["simulate", "--scene", "s.json", "--calib", "desk-small", "--out-dir", "sim"]).status.success());
    let out = cli(p, &["annotate", "--in", "sim/rain/scan_000000.bin", "--scene", "a.json", "--out", "a.label"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let n_points = std::fs::metadata(p.join("sim/rain/scan_000000.bin")).unwrap().len();
    assert_eq!(std::fs::metadata(p.join("a.label")).unwrap().len() * 4, n_points);

    std::fs::write(p.join("broken.json"), r#"{"boxes": []}"#).unwrap();
    let out = cli(p, &["simulate", "--scene", "broken.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.json") && err.contains("/ground_plane"), "{err}");
}
