use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn choreo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choreo"))
        .args(args)
        .env("CHOREO_FIXTURES", fixtures())
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    choreo(args).status.code().expect("exit code")
}

fn stdout(args: &[&str]) -> String {
    String::from_utf8(choreo(args).stdout).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["validate", "booksale"]), 0);
    assert_eq!(code(&["check", "booksale"]), 0);
    assert_eq!(code(&["check", "booksale_wrong"]), 1);
    assert_eq!(code(&["run", "booksale_crossed"]), 1);
    assert_eq!(code(&["project", "knowledge_of_choice"]), 1);
    assert_eq!(code(&["validate", "undefined_connector"]), 2);
    assert_eq!(code(&["run", "no_such_fixture"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn fixture_paths_work_too() {
    let path = fixtures().join("booksale.cr");
    assert_eq!(code(&["check", path.to_str().unwrap()]), 0);
}

#[test]
fn run_prints_a_numbered_trace() {
    let out = stdout(&["run", "booksale"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 8, "{out}");
    assert_eq!(lines[0], "   1  com  a2c  a > m  1 -> 2");
    assert_eq!(lines[6], "   7  com  ac2bs  a > b & c > s  1 -> 1");
    assert_eq!(lines[7], "terminated");
}

#[test]
fn step_limit_is_not_a_failure() {
    let out = choreo(&["run", "unbalanced_barrier", "--max-steps", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("step limit (3) reached"));
}

#[test]
fn seeded_runs_repeat() {
    let a = stdout(&["run", "booksale_flex", "--seed", "7"]);
    let b = stdout(&["run", "booksale_flex", "--seed", "7"]);
    assert_eq!(a, b);
}

#[test]
fn json_output_parses() {
    let v: serde_json::Value = serde_json::from_str(&stdout(&["check", "booksale_wrong", "--json"])).unwrap();
    assert_eq!(v["compatible"], false);
    assert_eq!(v["connector"], "ac2bs");
    assert_eq!(v["state"], "2");
    let v: serde_json::Value = serde_json::from_str(&stdout(&["run", "booksale", "--json"])).unwrap();
    assert_eq!(v["outcome"], "terminated");
    assert_eq!(v["trace"].as_array().unwrap().len(), 7);
}

#[test]
fn projection_matches_the_golden_network() {
    let golden = std::fs::read_to_string(fixtures().join("booksale.cp")).unwrap();
    let printed = stdout(&["project", "booksale"]);
    let a = choreo::textio::parse_network(&golden).unwrap();
    let b = choreo::textio::parse_network(&printed).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_and_correspond() {
    let out = stdout(&["simulate", "booksale"]);
    assert!(out.ends_with("terminated\n"), "{out}");
    assert_eq!(code(&["correspond", "booksale", "--bound", "15"]), 0);
}

#[test]
fn seeded_book_sale_run_matches_the_golden_trace() {
    let golden = std::fs::read_to_string(fixtures().join("booksale.trace")).unwrap();
    assert_eq!(stdout(&["run", "booksale", "--seed", "0"]), golden);
}

#[test]
fn written_projection_simulates() {
    let dir = std::env::temp_dir().join(format!("choreo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let net = dir.join("booksale.cp");
    assert_eq!(code(&["project", "booksale", "--out", net.to_str().unwrap()]), 0);
    assert!(dir.join("booksale.ca").exists());
    let out = stdout(&["simulate", net.to_str().unwrap()]);
    assert!(out.ends_with("terminated\n"), "{out}");
    // the hand-written golden network runs against the same connectors
    let ca = dir.join("booksale.ca");
    let golden = fixtures().join("booksale.cp");
    let out = choreo(&["simulate", golden.to_str().unwrap(), "--connectors", ca.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    std::fs::remove_dir_all(&dir).unwrap();
}
