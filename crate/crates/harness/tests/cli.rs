use std::path::Path;
use std::process::{Command, Output};

fn follow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_follow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_metrics_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let out = follow(&[
        "run", "--scenario", "playground", "--variant", "no-dfb", "--seed", "3", "--repeats", "1", "--scripts", "2", "--out",
        arg(&traces),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("episodes 2"));

    let mut files: Vec<_> = std::fs::read_dir(&traces).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 2);
    assert!(files[0].file_name().unwrap().to_str().unwrap().starts_with("playground-no_dfb-s00-r00"));

    let out = follow(&["metrics", "--traces", arg(&traces)]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("no_dfb") && l.contains(" 2 ")), "{table}");

    let svg = dir.path().join("ep.svg");
    let out = follow(&["render", "--trace", arg(&files[0]), "--out", arg(&svg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("class=\"state"));
}

#[test]
fn scenarios_are_written_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    let out = follow(&["scenarios", "--out", arg(dir.path())]);
    assert!(out.status.success());
    let forest = dir.path().join("forest.toml");
    assert!(forest.exists());
    let text = std::fs::read_to_string(&forest).unwrap();
    let cfg = follow_harness::ScenarioConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.name, "forest");

    let listing = follow(&["scenarios"]);
    assert!(String::from_utf8_lossy(&listing.stdout).contains("reappearance"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = follow(&["run", "--scenario", "no-such-scenario", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nrepeats = \"many\"\n").unwrap();
    let out = follow(&["run", "--scenario", arg(&bad), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_trace_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = follow(&["metrics", "--traces", arg(&dir.path().join("none.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
}
