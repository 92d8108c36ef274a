//! End-to-end checks of the `obsmc` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn obsmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obsmc"))
        .args(args)
        .env_remove("OBSMC_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("valid JSON on stdout")
}

/// Value of a `name value` row in table output.
fn row(table: &str, name: &str) -> String {
    table
        .lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(name)).then(|| it.next().unwrap_or("").to_string())
        })
        .unwrap_or_else(|| panic!("no `{name}` row in:\n{table}"))
}

#[test]
fn check_reports_counts() {
    let o = obsmc(&["check", "bench:p2wr"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.starts_with("ok: bench:p2wr: 2 processes, 5 events"),
        "{out}"
    );
    assert!(out.contains("architecture: acyclic"));
}

#[test]
fn check_notes_cyclic_architecture() {
    let o = obsmc(&["check", "bench:cyclic3", "--n", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("cyclic architecture"));
}

#[test]
fn check_reports_syntax_error_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cmp");
    std::fs::write(&path, "global x = 0\nprocess p {\n  write x = \n}\n").unwrap();
    let o = obsmc(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("{}:4:1:", path.display())), "{err}");
}

#[test]
fn check_rejects_unmatched_acquire() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("held.cmp");
    std::fs::write(
        &path,
        "global x = 0\nlock l\n\nprocess p1 {\n  acquire l\n  write x = 1\n}\n",
    )
    .unwrap();
    let o = obsmc(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("held.cmp:process p1"), "{err}");
}

#[test]
fn missing_file_is_input_error() {
    let o = obsmc(&["run", "/nonexistent/prog.cmp"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_builtin_is_input_error() {
    let o = obsmc(&["run", "bench:nope"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown benchmark"));
}

#[test]
fn brute_on_p2wr_counts_six_traces() {
    let o = obsmc(&["run", "bench:p2wr", "--algo", "brute"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(row(&out, "traces"), "6");
    assert_eq!(row(&out, "classes"), "3");
}

#[test]
fn dc_on_cyclic_program_exits_three_with_hint() {
    let o = obsmc(&["run", "bench:cyclic3", "--n", "1", "--algo", "dc"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dc-cyclic"));
}

#[test]
fn dc_cyclic_on_lastzero_matches_oracle() {
    let run = json(&obsmc(&[
        "run",
        "bench:lastzero",
        "--n",
        "2",
        "--algo",
        "dc-cyclic",
        "--output",
        "json",
    ]));
    assert_eq!(run["complete"], true);
    assert_eq!(run["violations"].as_array().unwrap().len(), 0);
    // Observation and Mazurkiewicz classes coincide on lastzero, and
    // sleep sets visit one trace per Mazurkiewicz class.
    let sleep = json(&obsmc(&[
        "run",
        "bench:lastzero",
        "--n",
        "2",
        "--algo",
        "sleep",
        "--output",
        "json",
    ]));
    assert_eq!(run["classes"], sleep["traces"]);
}

#[test]
fn json_schema_is_stable() {
    let o = obsmc(&["run", "bench:withdraw", "--output", "json"]);
    let v = json(&o);
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        [
            "algo",
            "calls",
            "classes",
            "complete",
            "program",
            "time_ms",
            "traces",
            "unrealizable",
            "violations"
        ]
    );
}

#[test]
fn table_and_json_agree() {
    let table = stdout(&obsmc(&["run", "bench:wr_grid", "--n", "2"]));
    let v = json(&obsmc(&[
        "run",
        "bench:wr_grid",
        "--n",
        "2",
        "--output",
        "json",
    ]));
    for key in ["traces", "classes", "calls", "unrealizable"] {
        assert_eq!(row(&table, key), v[key].to_string(), "{key}");
    }
}

#[test]
fn violation_sets_exit_one_and_reports_witness() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("race.cmp");
    let src = "global x = 0\n\nprocess p1 {\n  write x = 1\n}\n\nprocess p2 {\n  local r = read x\n  assert r == 0\n}\n";
    std::fs::write(&path, src).unwrap();
    for algo in ["dc", "sleep", "brute"] {
        let o = obsmc(&[
            "run",
            path.to_str().unwrap(),
            "--algo",
            algo,
            "--output",
            "json",
        ]);
        assert_eq!(o.status.code(), Some(1), "{algo}");
        let v = json(&o);
        let viol = v["violations"].as_array().unwrap();
        assert_eq!(viol.len(), 1, "{algo}");
        assert!(!viol[0]["witness"].as_array().unwrap().is_empty());
    }
}

#[test]
fn call_cap_reports_incomplete() {
    let o = obsmc(&[
        "run",
        "bench:opt_lock",
        "--n",
        "4",
        "--max-calls",
        "3",
        "--output",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["complete"], false);
}

#[test]
fn classes_on_p2wr() {
    let v = json(&obsmc(&["classes", "bench:p2wr", "--output", "json"]));
    assert_eq!(v["observation"], 3);
    assert_eq!(v["mazurkiewicz"], 4);
    let maz = json(&obsmc(&[
        "classes",
        "bench:p2wr",
        "--equiv",
        "maz",
        "--output",
        "json",
    ]));
    assert_eq!(maz["mazurkiewicz"], 4);
    assert!(maz.get("observation").is_none());
}

#[test]
fn classes_on_conflict_free_program() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("free.cmp");
    std::fs::write(&path, "global x = 0\nglobal y = 0\n\nprocess p1 {\n  write x = 1\n}\n\nprocess p2 {\n  write y = 1\n}\n").unwrap();
    let v = json(&obsmc(&[
        "classes",
        path.to_str().unwrap(),
        "--output",
        "json",
    ]));
    assert_eq!(v["observation"], 1);
    assert_eq!(v["mazurkiewicz"], 1);
}

#[test]
fn classes_on_wr_chain_three() {
    let v = json(&obsmc(&[
        "classes",
        "bench:wr_chain",
        "--n",
        "3",
        "--output",
        "json",
    ]));
    assert!(v["mazurkiewicz"].as_u64().unwrap() >= 20);
}

#[test]
fn bench_json_has_one_row_per_size() {
    let o = obsmc(&["bench", "opt_lock", "--sizes", "4,5", "--output", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = json(&o);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["n"], 4);
    assert_eq!(rows[0]["dc_algo"], "dc");
}

#[test]
fn bench_table_switches_to_cyclic_mode() {
    let o = obsmc(&["bench", "lastzero", "--sizes", "2,3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.contains("lastzero(2)") && out.contains("lastzero(3)"),
        "{out}"
    );
}

#[test]
fn emit_is_deterministic_and_reloads() {
    let a = stdout(&obsmc(&["emit", "bench:opt_lock", "--n", "3"]));
    let b = stdout(&obsmc(&["emit", "opt_lock", "--n", "3"]));
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("opt_lock3.cmp");
    let o = obsmc(&[
        "emit",
        "bench:opt_lock",
        "--n",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), a);
    assert_eq!(
        obsmc(&["check", path.to_str().unwrap()]).status.code(),
        Some(0)
    );
}

#[test]
fn shipped_benchmarks_match_generators() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("cmp") {
            continue;
        }
        let stem = path.file_stem().unwrap().to_str().unwrap();
        let (name, n) = match stem
            .rsplit_once('_')
            .and_then(|(a, b)| b.parse::<u32>().ok().map(|n| (a, n)))
        {
            Some((name, n)) => (name.to_string(), Some(n.to_string())),
            None => (stem.to_string(), None),
        };
        let mut args = vec!["emit".to_string(), format!("bench:{name}")];
        if let Some(n) = n {
            args.extend(["--n".to_string(), n]);
        }
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let emitted = stdout(&obsmc(&args));
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            emitted,
            "{}",
            path.display()
        );
        seen += 1;
    }
    assert!(seen >= 7, "only {seen} shipped benchmarks");
}
