use std::path::Path;
use std::process::{Command, Output};

fn dmclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmclab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn preset_file(name: &str) -> String {
    format!("{}/presets/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn error_kind(o: &Output) -> String {
    let text = if o.stdout.is_empty() { &o.stderr } else { &o.stdout };
    let v: serde_json::Value = serde_json::from_slice(text).expect("error record is JSON");
    assert_eq!(v["schema_version"], 1);
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn validate_accepts_every_shipped_preset_file() {
    for name in dmclab::presets::preset_names() {
        let o = dmclab(&["validate", "--config", &preset_file(name)]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn bounds_reproduces_worked_example() {
    let o = dmclab(&[
        "bounds", "--eta", "0.01", "--horizon", "100", "--lambda", "0.5", "--lipschitz", "1",
        "--beta", "1", "--m", "4", "--n", "25", "--format", "csv",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("smooth-constant,")).unwrap();
    let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - 0.1).abs() < 1e-12, "{line}");
}

#[test]
fn sweep_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = dmclab(&["sweep", "--preset", "gtc-vs-ctg", "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &Path| std::fs::read(d.join("gtc-vs-ctg.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(!read(&a).contains(&b'\r'));
    assert!(a.join("gtc-vs-ctg.timing.csv").exists());
}

#[test]
fn seed_override_changes_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o = dmclab(&["sweep", "--preset", "sgda-smooth", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read_to_string(out.join("sgda-smooth.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn report_totals_match_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let mut files = vec![];
    for name in ["gtc-vs-ctg", "consensus-check"] {
        let o = dmclab(&["sweep", "--preset", name, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        files.push(out.join(format!("{name}.csv")).to_str().unwrap().to_string());
    }
    let report = dir.path().join("report");
    let mut args = vec!["report"];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--out", report.to_str().unwrap()]);
    let o = dmclab(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    let per_file: u64 = summary["files"].as_array().unwrap().iter().map(|f| f["rows"].as_u64().unwrap()).sum();
    assert_eq!(summary["total_rows"].as_u64().unwrap(), per_file);
    assert_eq!(per_file, 2 + 4);
    let parts = ["dominated", "not_dominated", "unpaired"].map(|k| summary[k].as_u64().unwrap());
    assert_eq!(parts.iter().sum::<u64>(), per_file);
    let merged = std::fs::read_to_string(report.join("merged.csv")).unwrap();
    assert_eq!(merged.lines().filter(|l| !l.starts_with('#')).count() as u64, per_file + 1);
    assert!(report.join("plot.dat").exists() && report.join("plot.gp").exists());
}

#[test]
fn run_writes_trajectory_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = dmclab(&["run", "--preset", "gtc-vs-ctg", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for suffix in [".trajectory.csv", ".replay.json"] {
        assert!(names.iter().any(|n| n.ends_with(suffix)), "{names:?}");
    }
}

#[test]
fn errors_are_structured_records() {
    let o = dmclab(&["validate", "--preset", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "unknown-preset");

    let o = dmclab(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    error_kind(&o);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(preset_file("gtc-vs-ctg")).unwrap();
    std::fs::write(&bad, text.replace("master_seed = 2024", "master_seed = 2024\nbogus = 1")).unwrap();
    let o = dmclab(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let huge = dir.path().join("huge.toml");
    std::fs::write(&huge, text.replace("master_seed = 2024", "master_seed = 2024\nbudget = 10")).unwrap();
    let o = dmclab(&["validate", "--config", huge.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "budget-exceeded");
}

#[test]
fn help_exits_cleanly() {
    assert!(dmclab(&["--help"]).status.success());
}
