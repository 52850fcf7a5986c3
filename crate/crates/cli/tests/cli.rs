//! The `parkour` binary end to end: output and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const WALL: &str = r#"{
  "schema_version": 1,
  "name": "wall",
  "parkour": {"x_min": 0.0, "x_max": 3.0, "obstacles": [{"id": "w", "A": 0.5, "B": 0.7, "H": 1.0}]},
  "x_s": 0.0,
  "x_g": 1.5
}"#;

const SHORT: &str = r#"{
  "schema_version": 1,
  "name": "short",
  "parkour": {"x_min": 0.0, "x_max": 2.0, "obstacles": [{"id": "o1", "A": 0.8, "B": 1.0, "H": 0.1}]},
  "x_s": 0.0,
  "x_g": 1.6
}"#;

fn parkour(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parkour")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn scenarios_lists_and_prints_bundled_courses() {
    let o = parkour(&["scenarios"]);
    assert_eq!(code(&o), 0);
    let names: Vec<_> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(names, ["static_course", "dynamic_course", "disturbed_course"]);

    let o = parkour(&["scenarios", "static_course"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["name"], "static_course");

    assert_eq!(code(&parkour(&["scenarios", "nope"])), 2);
}

#[test]
fn plan_reports_the_first_step() {
    let dir = tempfile::tempdir().unwrap();
    let short = write(dir.path(), "short.json", SHORT);
    let o = parkour(&["plan", &short, "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let jumps = v["full_plan"]["jumps"].as_array().unwrap();
    assert_eq!(jumps.len() as u64, v["horizon_used"].as_u64().unwrap());
    assert_eq!(v["first_jump"], jumps[0]);
    let last = jumps.last().unwrap()["landing"][0].as_f64().unwrap();
    assert!((last - v["target_used"].as_f64().unwrap()).abs() < 1e-9);

    let o = parkour(&["plan", &short]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("target "));

    let o = parkour(&["plan", &short, "--from", "1.2", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["full_plan"]["jumps"][0]["takeoff"][0], 1.2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let wall = write(dir.path(), "wall.json", WALL);
    let short = write(dir.path(), "short.json", SHORT);
    let broken = write(dir.path(), "broken.json", "{\"schema_version\": 1");
    let inverted = write(dir.path(), "inverted.json", &SHORT.replace("\"B\": 1.0", "\"B\": 0.7"));

    assert_eq!(code(&parkour(&["run", &short])), 0);
    let o = parkour(&["run", &wall]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("PlanningFailed"));
    let o = parkour(&["plan", &wall]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).starts_with("error: "));

    for args in [
        vec!["run", "no_such_course"],
        vec!["plan", broken.as_str()],
        vec!["run", inverted.as_str()],
        vec!["bench", short.as_str(), "--reps", "0"],
        vec!["frobnicate"],
    ] {
        let o = parkour(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
    assert_eq!(code(&parkour(&["--help"])), 0);
}

#[test]
fn run_log_feeds_trace() {
    let dir = tempfile::tempdir().unwrap();
    let short = write(dir.path(), "short.json", SHORT);
    let log = dir.path().join("run.jsonl");
    let svg = dir.path().join("run.svg");
    let o = parkour(&[
        "run",
        &short,
        "--log",
        log.to_str().unwrap(),
        "--trace",
        svg.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["outcome"], "goal_reached");
    assert_eq!(v["hard_failures"], 0);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let o = parkour(&["trace", log.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = stdout(&o);
    let header = csv.lines().next().unwrap();
    assert!(header.contains(','));
    assert!(csv.lines().count() > 10);

    let out = dir.path().join("again.svg");
    let o = parkour(&["trace", log.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), fs::read_to_string(&svg).unwrap());

    assert_eq!(code(&parkour(&["trace", log.to_str().unwrap(), "--format", "pdf"])), 2);
    assert_eq!(code(&parkour(&["trace", dir.path().join("missing").to_str().unwrap()])), 2);
}

#[test]
fn seeded_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let short = write(dir.path(), "short.json", SHORT);
    let landings = |seed: &str| {
        let o = parkour(&["run", &short, "--seed", seed, "--json"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["jumps"]
            .as_array()
            .unwrap()
            .iter()
            .map(|j| j["landing"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(landings("7"), landings("7"));
}

#[test]
fn bench_reports_each_jump() {
    let dir = tempfile::tempdir().unwrap();
    let short = write(dir.path(), "short.json", SHORT);
    let o = parkour(&["bench", &short, "--reps", "1", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["repetitions"], 1);
    let rows = v["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert!(r["loop_time"].as_f64().unwrap() >= r["solve_time"].as_f64().unwrap());
    }
    let o = parkour(&["bench", &short, "--reps", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("median loop time"));
}

#[test]
fn serve_rejects_bad_options() {
    let o = parkour(&["serve", "static_course", "--speed", "0"]);
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_parkour"))
        .args(["serve", "static_course"])
        .env("PARKOUR_BIND", "not an address")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("PARKOUR_BIND"));
}
