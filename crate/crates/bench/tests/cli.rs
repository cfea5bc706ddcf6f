//! The `mrpp` binary: outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use mrpp_bench::SummaryRow;

fn mrpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrpp"))
        .args(args)
        .env_remove("MRPP_DB_DIR")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bench_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = mrpp(&[
        "bench", "--map", "empty:6x6", "--robots", "4,8", "--solvers", "ecbs:1.5;cbs", "--reps", "2", "--timeout", "10", "--traces", "--out", path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut reader = csv::Reader::from_path(out.join("records.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    let summary: Vec<SummaryRow> = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.len(), 4);
    assert!(summary.iter().all(|r| r.runs == 2));
    assert!(out.join("summary.csv").exists());
    assert!(out.join("traces").read_dir().unwrap().count() > 0);
}

#[test]
fn configuration_errors_exit_nonzero_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let base = ["bench", "--robots", "4", "--reps", "1", "--out", path(&out)];
    let cases: [&[&str]; 5] = [
        &["--map", "empty:6x6", "--solvers", "astar"],
        &["--map", "/no/such/file.map", "--solvers", "ecbs:1.5"],
        // The database is needed but neither --db nor the variable is set.
        &["--map", "empty:6x6", "--solvers", "dcbs:noc=20"],
        &["--map", "empty:6x6", "--solvers", "ecbs:1.5", "--gen", "poisson"],
        &["--map", "empty:6x6", "--solvers", "dbroot", "--db", path(dir.path())],
    ];
    for extra in cases {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        let res = mrpp(&args);
        assert_eq!(res.status.code(), Some(2), "{extra:?}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(String::from_utf8_lossy(&res.stderr).contains("configuration error"));
        assert!(!out.join("records.csv").exists(), "{extra:?} ran something");
    }
}

#[test]
fn failed_runs_are_not_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // Far too dense to solve in the limit; the suite still completes.
    let res = mrpp(&[
        "bench", "--map", "empty:12x12", "--robots", "120", "--solvers", "cbs", "--reps", "1", "--timeout", "0.2", "--out", path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(text.contains("timeout"), "{text}");
}

#[test]
fn gen_then_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("corner.scen");
    let plan = dir.path().join("plan.json");
    let res = mrpp(&["gen", "--map", "empty:12x12", "--gen", "corner", "--robots", "9", "--seed", "3", "--out", path(&scen)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(dir.path().join("corner.scen.json").exists());
    for solver in ["scbs:rho=0.5,window=5", "dcbs:noc=20"] {
        let res = mrpp(&["solve", path(&scen), "--solver", solver, "--timeout", "20", "--db-lazy", "--plan-out", path(&plan)]);
        let stdout = String::from_utf8_lossy(&res.stdout);
        assert!(res.status.success() && stdout.starts_with("solved"), "{solver}: {stdout}");
        let written: mrpp_core::Plan = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
        assert_eq!(written.num_robots(), 9);
    }
}

#[test]
fn db_gen_writes_loadable_tables() {
    let dir = tempfile::tempdir().unwrap();
    let res = mrpp(&["db-gen", "--out", path(dir.path()), "--shape", "3x2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = dir.path().join("prim_3x2.db");
    let db = mrpp_core::primdb::load_db(&table).unwrap();
    assert_eq!(db.shape(), mrpp_core::primdb::BaseShape::ThreeByTwo);
}
