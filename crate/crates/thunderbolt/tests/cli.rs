use std::process::{Command, Output};

use thunderbolt::report::CSV_HEADER;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thunderbolt")).args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_prints_csv_row() {
    let out = stdout(&bin(&["run", "--txs", "400", "--seed", "3"]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "thunderbolt");
    assert_eq!(row[11], "400");
}

#[test]
fn same_seed_same_bytes() {
    let a = stdout(&bin(&["run", "--txs", "300", "--seed", "8", "--cross-pct", "40"]));
    let b = stdout(&bin(&["run", "--txs", "300", "--seed", "8", "--cross-pct", "40"]));
    assert_eq!(a, b);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "protocol = \"tusk-serial\"\nreplicas = 7\ntxs = 300\nseed = 2\n").unwrap();
    let out = stdout(&bin(&["run", "--config", cfg.to_str().unwrap(), "--txs", "200", "--format", "jsonl"]));
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["protocol"], "tusk-serial");
    assert_eq!(v["replicas"], 7);
    assert_eq!(v["f"], 2);
    assert_eq!(v["committed"], 200);
}

#[test]
fn bad_inputs_fail() {
    assert_eq!(bin(&["run", "--replicas", "4", "--faults", "2"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "replica = 4\n").unwrap();
    assert_eq!(bin(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn out_dir_gets_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("run");
    stdout(&bin(&["run", "--txs", "200", "--out", d.to_str().unwrap()]));
    let csv = std::fs::read_to_string(d.join("metrics.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    for i in 0..4 {
        assert!(d.join(format!("replica-{i}.log")).exists());
    }
    assert!(d.join("report.txt").exists());
}

#[test]
fn rotation_scenario_log_is_stable() {
    let a = stdout(&bin(&["run", "--scenario", "fig5", "--seed", "1"]));
    let b = stdout(&bin(&["run", "--scenario", "rotation", "--seed", "1"]));
    assert_eq!(a, b);
    assert!(a.contains("committed"));
}

#[test]
fn workload_file_replays() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    let ws = w.to_str().unwrap();
    stdout(&bin(&["workload", "--txs", "250", "--seed", "4", "--out", ws]));
    assert_eq!(std::fs::read_to_string(&w).unwrap().lines().count(), 250);
    let from_file = stdout(&bin(&["run", "--workload", ws, "--seed", "4"]));
    assert!(from_file.lines().nth(1).unwrap().contains(",250,"));
}

#[test]
fn fuzz_passes_and_reports() {
    let out = stdout(&bin(&["fuzz", "--count", "100"]));
    assert_eq!(out.trim(), "300 batches passed");
}
