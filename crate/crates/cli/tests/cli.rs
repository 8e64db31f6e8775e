use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn macsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("MACSIM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MC_CONFIG: &str = r#"{
  "protocol": {"kind": "pi-mod", "epsilon": "1/8"},
  "n": [4, 8],
  "strategy": {"kind": "scenario", "scenario": "static"},
  "trials": 40,
  "seed": 11
}"#;

#[test]
fn simulate_writes_trace_and_reports_admissible() {
    let dir = TempDir::new().unwrap();
    let out = macsim(dir.path(), &["simulate", "--protocol", "pi-mod", "--n", "8", "--epsilon", "1/16", "--seed", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("admissible: true"), "{}", stdout(&out));
    let text = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["kind"], "header");
    assert_eq!(header["n"], 8);
    assert_eq!(header["protocol"], "pi-mod");
    assert!(lines.all(|l| serde_json::from_str::<Value>(l).unwrap()["kind"] == "round"));

    let check = macsim(dir.path(), &["validate", "trace.jsonl"]);
    assert!(check.status.success());
    assert!(stdout(&check).contains("rule breaks: 0"));
}

#[test]
fn pi_mod_without_n_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = macsim(dir.path(), &["simulate", "--protocol", "pi-mod"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--n"), "{}", stderr(&out));
}

#[test]
fn missing_capability_is_reported() {
    let dir = TempDir::new().unwrap();
    let out = macsim(dir.path(), &["simulate", "--protocol", "tournament", "--n", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cd"), "{}", stderr(&out));
}

#[test]
fn mc_reports_are_reproducible_and_agree() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("exp.json"), MC_CONFIG).unwrap();
    for name in ["a", "b"] {
        let out = macsim(
            dir.path(),
            &["mc", "--config", "exp.json", "--json", &format!("{name}.json"), "--csv", &format!("{name}.csv")],
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["seed"], 11);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);

    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let records: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(records.len(), rows.len());
    for (row, rec) in rows.iter().zip(&records) {
        for (col, cell) in header.iter().zip(rec) {
            let v = &row[*col];
            match v {
                Value::Null => assert_eq!(*cell, ""),
                Value::String(s) => assert_eq!(cell, s),
                Value::Number(x) => assert_eq!(cell.parse::<f64>().unwrap(), x.as_f64().unwrap(), "{col}"),
                other => panic!("unexpected value {other} in column {col}"),
            }
        }
    }
}

#[test]
fn mc_emits_one_row_per_scenario_and_n() {
    let dir = TempDir::new().unwrap();
    let out = macsim(
        dir.path(),
        &[
            "mc", "--protocol", "tournament-dyn", "--cd", "--kn", "--n", "4,6", "--scenario", "static", "--scenario",
            "bursty", "--trials", "20", "--json", "r.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    let cells: Vec<(String, u64)> = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["scenario"].as_str().unwrap().to_string(), r["n"].as_u64().unwrap()))
        .collect();
    assert_eq!(
        cells,
        [("static".into(), 4), ("static".into(), 6), ("bursty".into(), 4), ("bursty".into(), 6)]
    );
}

#[test]
fn seed_precedence() {
    let dir = TempDir::new().unwrap();
    let unseeded = MC_CONFIG.replace("\"seed\": 11", "\"horizon\": 100000");
    std::fs::write(dir.path().join("exp.json"), unseeded).unwrap();
    std::fs::write(dir.path().join("seeded.json"), MC_CONFIG).unwrap();
    let run = |args: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_macsim"));
        cmd.args(args).current_dir(dir.path()).env_remove("MACSIM_SEED");
        if let Some(s) = env {
            cmd.env("MACSIM_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out).lines().next().unwrap().to_string()
    };
    assert_eq!(run(&["mc", "--config", "exp.json"], None), "seed: 0");
    assert_eq!(run(&["mc", "--config", "exp.json"], Some("7")), "seed: 7");
    assert_eq!(run(&["mc", "--config", "seeded.json"], Some("7")), "seed: 11");
    assert_eq!(run(&["mc", "--config", "seeded.json", "--seed", "9"], Some("7")), "seed: 9");
}

#[test]
fn config_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\n  \"protocol\": {\"kind\": \"pi-mod\"},\n  \"n\": [4,,],\n}").unwrap();
    let out = macsim(dir.path(), &["mc", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("bad.json") && err.contains("line 3"), "{err}");

    std::fs::write(dir.path().join("zero.json"), MC_CONFIG.replace("\"trials\": 40", "\"trials\": 0")).unwrap();
    let out = macsim(dir.path(), &["mc", "--config", "zero.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("trials"));
}

#[test]
fn adversary_replays_a_violation() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("s.json"), r#"{"schedules": ["1101", "1001", "11", "11", "0111", "1"]}"#).unwrap();
    let out = macsim(dir.path(), &["adversary", "--schedules", "s.json", "--out", "lb.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("p_star: [0, 1, 2, 3, 4]"), "{text}");
    assert!(text.contains("violation: round"), "{text}");

    let check = macsim(dir.path(), &["validate", "lb.jsonl"]);
    assert!(check.status.success());
    assert!(stdout(&check).contains("admissible: false"));
}

#[test]
fn adversary_fails_when_post_conditions_fail() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("s.json"), r#"{"schedules": ["1", "01", "001", "0001"]}"#).unwrap();
    let out = macsim(dir.path(), &["adversary", "--schedules", "s.json"]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("post-conditions: failed"));

    std::fs::write(dir.path().join("odd.json"), r#"{"schedules": ["1", "1", "1"]}"#).unwrap();
    let out = macsim(dir.path(), &["adversary", "--schedules", "odd.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_flags_broken_traces() {
    let dir = TempDir::new().unwrap();
    let out = macsim(dir.path(), &["simulate", "--protocol", "tournament", "--cd", "--kn", "--n", "4", "--out", "t.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let broken = text.replacen(r#""from":"remainder","to":"entry""#, r#""from":"critical","to":"entry""#, 1);
    assert_ne!(broken, text);
    std::fs::write(dir.path().join("broken.jsonl"), broken).unwrap();
    let out = macsim(dir.path(), &["validate", "broken.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("moved from critical to entry"), "{}", stdout(&out));

    std::fs::write(dir.path().join("junk.jsonl"), "{\"kind\":\"header\"}\n").unwrap();
    let out = macsim(dir.path(), &["validate", "junk.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}
