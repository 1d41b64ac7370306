//! End-to-end checks of the `feddecomp` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const TINY: &str = "N = 2\nT = 2\nE = 2\nE_lora = 1\nper_class = 60\ntrain_per_client = 40\ntest_per_client = 20\nbatch_size = 40\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feddecomp"))
}

fn write_config(dir: &Path, name: &str, body: &str, out: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!("{body}output_dir = {}\n", dir.join(out).display());
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn smoke_run_is_fast_and_ends_with_best_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "smoke.cfg", "N = 2\nT = 1\n", "out");
    let start = Instant::now();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(secs < 5.0, "took {secs:.2}s");

    let text = stdout(&out);
    let last: f64 = text.lines().last().unwrap().trim().parse().unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["best_mean_accuracy"].as_f64().unwrap(), last);
    for f in ["report.csv", "report.json", "partition.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", TINY, "out");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let out = bin().arg("run").arg(&cfg).output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        let files: Vec<Vec<u8>> = ["report.csv", "report.json", "partition.json"]
            .iter()
            .map(|f| std::fs::read(dir.path().join("out").join(f)).unwrap())
            .collect();
        snapshots.push((stdout(&out), files));
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for workers in ["1", "3"] {
        let cfg = write_config(dir.path(), &format!("w{workers}.cfg"), TINY, &format!("out{workers}"));
        let out = bin().env("FEDDECOMP_WORKERS", workers).arg("run").arg(&cfg).output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        csvs.push(std::fs::read(dir.path().join(format!("out{workers}/report.csv"))).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn config_errors_exit_2_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "E = 3\nE_lora = 4\n", "out");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 2") && err.contains("E_lora"), "{err}");

    let cfg = write_config(dir.path(), "typo.cfg", "rounds = 3\n", "out");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rounds"));
}

#[test]
fn missing_idx_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "dataset = idx\nidx_images = {}\nidx_labels = {}\n",
        dir.path().join("nope-images").display(),
        dir.path().join("nope-labels").display()
    );
    let cfg = write_config(dir.path(), "idx.cfg", &body, "out");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("nope-images"));
}

#[test]
fn missing_config_file_exits_5() {
    let out = bin().args(["run", "/definitely/not/here.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn inspect_partition_prints_one_line_per_client() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.cfg", "N = 5\n", "out");
    let out = bin().arg("inspect-partition").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let ids: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("client"))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(ids, ["0", "1", "2", "3", "4"], "{text}");
    assert!(!dir.path().join("out").exists(), "inspection must not write reports");
}

#[test]
fn elora_sweep_emits_a_row_per_cell_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.cfg", TINY, "unused");
    let out_dir = dir.path().join("sweep");
    let out = bin()
        .args(["suite", "elora-sweep", "--seed", "4", "--out"])
        .arg(&out_dir)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("elora-sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "cell,seed,best,mean,std");
    // E = 2 → cells E_lora = 0, 1, 2, three seeds each
    assert_eq!(lines.len() - 1, 3 * 3);
    let seeds: Vec<&str> = lines[1..4].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["4", "5", "6"]);
    assert!(out_dir.join("cell_02/seed_6/report.csv").is_file());
}

#[test]
fn alternating_suite_records_winners() {
    let dir = tempfile::tempdir().unwrap();
    // Joint training needs a small step on this data.
    let body = format!("{TINY}lr = 0.01\n");
    let cfg = write_config(dir.path(), "a.cfg", &body, "unused");
    let out_dir = dir.path().join("alt");
    let out = bin()
        .args(["suite", "alternating", "--out"])
        .arg(&out_dir)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let winners = std::fs::read_to_string(out_dir.join("alternating_winners.csv")).unwrap();
    assert_eq!(winners.lines().count(), 1 + 3);
    assert!(stdout(&out).contains("wins"));
}

#[test]
fn unknown_suite_is_rejected_by_the_parser() {
    let out = bin().args(["suite", "sweep", "--out", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("elora-sweep"));
}

#[test]
fn help_documents_commands_and_worker_variable() {
    let out = bin().arg("--help").output().unwrap();
    let text = stdout(&out);
    for needle in ["run", "suite", "inspect-partition", "FEDDECOMP_WORKERS", "Exit codes"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}
