use std::path::Path;
use std::process::{Command, Output};

fn edge_aoi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edge-aoi")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_run_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_aoi(&[
        "--policy", "threshold", "--profile", "low", "--capacitance", "6", "--days", "2", "--seed", "3",
        "--out", path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("threshold"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["profile"], "low");
    assert_eq!(summary["capacitance_farads"], 6.0);
    assert_eq!(summary["seed"], 3);
    let csv = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 * 720 + 1);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# short split run\npolicy = split-drl\ndays = 2\neval_days = 1\ne_ann_mj = 0\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = edge_aoi(&[
        "--config", path(&conf), "--updates-per-day", "3", "--set", "t_ann_steps=50", "--out", path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["policy"], "split-drl-3");
    assert_eq!(summary["days"], 2);
}

#[test]
fn several_capacitances_produce_a_sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_aoi(&[
        "--policy", "threshold", "ideal-uniform", "--capacitance", "4", "8", "--days", "1", "--out", path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn trace_files_drive_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("lux.csv");
    let rows: String = (0..720).map(|i| format!("{},{}\n", i * 120, if (180..540).contains(&i) { 500 } else { 0 })).collect();
    std::fs::write(&trace, format!("timestamp,lux\n{rows}")).unwrap();
    let ok = edge_aoi(&["--policy", "threshold", "--days", "1", "--trace", path(&trace), "--lux-coeff", "1e-7"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let short = edge_aoi(&["--policy", "threshold", "--days", "2", "--trace", path(&trace), "--lux-coeff", "1e-7"]);
    assert!(!short.status.success());
    assert!(String::from_utf8_lossy(&short.stderr).contains("trace has 720 steps"));
    let no_coeff = edge_aoi(&["--policy", "threshold", "--days", "1", "--trace", path(&trace)]);
    assert!(!no_coeff.status.success());
}

#[test]
fn config_errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "colour = blue\n").unwrap();
    for args in [
        vec!["--config", path(&conf)],
        vec!["--policy", "greedy"],
        vec!["--updates-per-day", "5"],
        vec!["--set", "gamma=1.5"],
        vec!["--days", "0"],
        vec!["--capacitance", "-1"],
        vec!["--config", "/nonexistent.conf"],
    ] {
        let out = edge_aoi(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("edge-aoi:"), "{args:?}");
    }
    assert_eq!(edge_aoi(&["--config", path(&conf)]).status.code(), Some(2));
}
