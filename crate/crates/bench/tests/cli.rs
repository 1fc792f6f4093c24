use std::fs;
use std::path::Path;
use std::process::Command;

use ctcp_bench::report::{aggregate, read_csv, AggregateRow, FairnessRow, ResultRow, TraceRow};

const SMALL: &str = r#"
variants = ["ctcp_v2", "reno"]
per = [0.0, 0.05, 0.1]
rtt_ms = [50, 100]
repetitions = 3
transfer_bytes = 200000
base_seed = 7
fairness_per = [0.0]
fairness_rtt_ms = [100]
fairness_duration_s = 20.0
fairness_rate_mbps = 5.0
"#;

fn bench(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ctcp-bench"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sweep_writes_one_row_per_run_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let out = bench(&a, &["sweep", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bench(&b, &["sweep", "--config", &cfg, "--parallel", "2"]);
    assert!(out.status.success());

    let raw_a = fs::read(a.join("sweep_raw.csv")).unwrap();
    assert_eq!(raw_a, fs::read(b.join("sweep_raw.csv")).unwrap());
    let agg_a = fs::read(a.join("sweep_aggregate.csv")).unwrap();
    assert_eq!(agg_a, fs::read(b.join("sweep_aggregate.csv")).unwrap());

    let rows: Vec<ResultRow> = read_csv(&raw_a).unwrap();
    assert_eq!(rows.len(), 36);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.seed, 7 + i as u64);
        assert!(!r.incomplete);
    }
    let written: Vec<AggregateRow> = read_csv(&agg_a).unwrap();
    assert_eq!(written, aggregate(&rows));
}

#[test]
fn seed_and_reps_flags_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = bench(tmp.path(), &["sweep", "--config", &cfg, "--seed", "100", "--reps", "1"]);
    assert!(out.status.success());
    let rows: Vec<ResultRow> = read_csv(&fs::read(tmp.path().join("sweep_raw.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[0].seed, 100);
}

#[test]
fn fairness_emits_test_and_baseline_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = bench(tmp.path(), &["fairness", "--config", &cfg, "--reps", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<FairnessRow> =
        read_csv(&fs::read(tmp.path().join("fairness_raw.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 8);
    for series in ["test", "baseline"] {
        let mine: Vec<&FairnessRow> = rows.iter().filter(|r| r.series == series).collect();
        assert_eq!(mine.len(), 4);
        assert!(mine.iter().filter(|r| r.flow == 0).all(|r| r.variant == "cubic"));
    }
    assert!(rows
        .iter()
        .any(|r| r.series == "test" && r.flow == 1 && r.variant == "ctcp_v2"));
    for pair in rows.chunks(2) {
        assert!(pair[0].goodput_bps + pair[1].goodput_bps <= 5e6);
    }
    assert!(tmp.path().join("fairness_summary.csv").exists());
}

#[test]
fn zero_length_trace_is_empty_and_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bench(tmp.path(), &["trace", "--bytes", "0"]);
    assert!(out.status.success());
    let rows: Vec<TraceRow> = read_csv(&fs::read(tmp.path().join("trace.csv")).unwrap()).unwrap();
    assert!(rows.is_empty());
}

#[test]
fn trace_rows_are_time_ordered() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bench(
        tmp.path(),
        &["trace", "--bytes", "2000000", "--per", "0.2", "--variant", "ctcp_v1"],
    );
    assert!(out.status.success());
    let rows: Vec<TraceRow> = read_csv(&fs::read(tmp.path().join("trace.csv")).unwrap()).unwrap();
    assert!(rows.len() > 2);
    assert!(rows.windows(2).all(|w| w[0].t_s < w[1].t_s));
    assert!(rows.iter().map(|r| r.decode_events).sum::<usize>() > 0);
}

#[test]
fn bad_config_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "repetitions = 0\n").unwrap();
    let out = bench(tmp.path(), &["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("repetitions"));
}

#[test]
fn incomplete_runs_set_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("short.toml");
    fs::write(
        &path,
        "variants = [\"reno\"]\nper = [0.0]\nrtt_ms = [500]\nrepetitions = 1\nduration_cap_s = 1.0\n",
    )
    .unwrap();
    let out = bench(tmp.path(), &["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let rows: Vec<ResultRow> = read_csv(&fs::read(tmp.path().join("sweep_raw.csv")).unwrap()).unwrap();
    assert!(rows[0].incomplete);
    assert_eq!(rows[0].completion_s, None);
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bench(tmp.path(), &["selftest"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 8);
}
