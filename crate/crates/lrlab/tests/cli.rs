use std::path::{Path, PathBuf};
use std::process::Command;

use lrlab::report::{csv_bytes, parse_csv, Summary};
use lrlab_core::bounds::BoundReport;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lrlab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn lrlab(suite: &str, config: &str, dir: &Path, extra: &[&str]) -> i32 {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_lrlab"))
        .arg(suite)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env("LRLAB_THREADS", "1")
        .status()
        .unwrap();
    status.code().unwrap()
}

#[test]
fn empty_batch_writes_header_only() {
    let dir = scratch("empty");
    let code = lrlab("verify-lr", "schema_version = 1\nseed = 3\n[batch]\ncount = 0\n", &dir, &[]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.join("out/verify-lr.csv")).unwrap();
    assert_eq!(csv, "case_id,theorem,lhs,rhs,margin,pass\n");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("out/verify-lr.json")).unwrap()).unwrap();
    assert_eq!(json["n_cases"], 0);
    assert!(json["worst_margin"].is_null());
}

#[test]
fn schema_errors_exit_two() {
    let dir = scratch("schema");
    assert_eq!(lrlab("tree-suite", "schema_version = 2\n", &dir, &[]), 2);
    assert_eq!(lrlab("tree-suite", "schema_version = 1\nunknown = 1\n", &dir, &[]), 2);
    assert_eq!(lrlab("verify-lr", "schema_version = 1\n", &dir, &[]), 2);
}

#[test]
fn guards_exit_three_unless_overridden() {
    let dir = scratch("guard");
    assert_eq!(lrlab("tree-suite", "schema_version = 1\n[trees]\nk_max = 10\n", &dir, &[]), 3);
    assert_eq!(lrlab("tree-suite", "schema_version = 1\n[model]\nbig_l = 3\nl = 1\nd = 2\n", &dir, &[]), 3);
    assert_eq!(lrlab("tree-suite", "schema_version = 1\n[model]\nbig_l = 3\nl = 1\nd = 2\n", &dir, &["--override-guards"]), 0);
}

#[test]
fn tree_suite_counts_factorials() {
    let dir = scratch("trees");
    assert_eq!(lrlab("tree-suite", "schema_version = 1\n[trees]\nk_max = 5\n", &dir, &[]), 0);
    let rows = parse_csv(&std::fs::read(dir.join("out/tree-suite.csv")).unwrap()).unwrap();
    let counts: Vec<f64> = rows.iter().filter(|r| r.1 == "tree-count").map(|r| r.2).collect();
    assert_eq!(counts, vec![1.0, 2.0, 6.0, 24.0, 120.0]);
    assert!(rows.iter().all(|r| r.5));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    let cfg = "schema_version = 1\nseed = 11\n[batch]\ncount = 3\n";
    assert_eq!(lrlab("verify-lr", cfg, &a, &[]), 0);
    assert_eq!(lrlab("verify-lr", cfg, &b, &["--threads", "2"]), 0);
    let read = |d: &Path, f: &str| std::fs::read(d.join("out").join(f)).unwrap();
    assert_eq!(read(&a, "verify-lr.csv"), read(&b, "verify-lr.csv"));
    let masked = |d: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&read(d, "verify-lr.json")).unwrap();
        v["wall_time"] = 0.into();
        v
    };
    assert_eq!(masked(&a), masked(&b));
}

#[test]
fn csv_round_trips_seventeen_digits() {
    let xs = [std::f64::consts::PI, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE];
    let rows: Vec<BoundReport> = xs.iter().map(|&x| BoundReport::new("c", "t", x, x.abs() + 1.0, Vec::new())).collect();
    let back = parse_csv(&csv_bytes(&rows).unwrap()).unwrap();
    for (r, b) in rows.iter().zip(&back) {
        assert_eq!((r.lhs, r.rhs, r.margin, r.pass), (b.2, b.3, b.4, b.5));
    }
}

#[test]
fn any_failing_row_fails_the_summary() {
    let rows = vec![
        BoundReport::new("ok", "t", 1.0, 2.0, Vec::new()),
        BoundReport::new("bad", "t", 3.0, 2.0, Vec::new()),
    ];
    let s = Summary::new("mixed", &rows, 0.0);
    assert!(!s.all_pass());
    assert_eq!((s.n_cases, s.n_pass), (2, 1));
    assert_eq!(s.worst_margin, Some(-1.0));
}
