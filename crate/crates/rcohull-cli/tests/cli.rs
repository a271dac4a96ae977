use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcohull_cli::output::{read_json, read_mesh, write_mesh, CheckRecord, ExportRecord, LaminateRecord, SolveRecord, WalkRecord};
use rcohull_cli::scenario::Scenario;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn rcohull(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcohull")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = rcohull(args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn hull_check_on_the_hyperbola() {
    let text = run_ok(&["hull", "check", "--scenario", arg(&scenario("twopoint.json"))]);
    let recs: Vec<CheckRecord> = serde_json::from_str(&text).unwrap();
    assert_eq!(recs.len(), 3);
    // (1.5, 2.0) sits on x2 = a1 a2 / x1
    assert!(recs[0].closure.accepted);
    assert!(!recs[0].strict.accepted);
    assert_eq!(recs[0].singular_values, vec![1.5, 2.0]);
    assert!(recs[1].closure.accepted && recs[1].strict.accepted);
    assert!(!recs[2].closure.accepted && recs[2].closure.margin < 0.0);
}

#[test]
fn three_atom_witness() {
    let dir = tempfile::tempdir().unwrap();
    let text = run_ok(&["laminate", "verify", "--scenario", arg(&scenario("three_atom.json")), "--out", arg(dir.path())]);
    let rec: LaminateRecord = serde_json::from_str(&text).unwrap();
    let steps = rec.witness.expect("witness");
    assert_eq!(steps.len(), 2);
    assert_eq!((steps[0].i, steps[0].j), (0, 1));
    assert_eq!(steps[0].matrix, vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
    assert_eq!(rec.outside_mass, 0.0);
    let back: LaminateRecord = read_json(&dir.path().join("laminate_verify.json")).unwrap();
    assert_eq!(back, serde_json::from_str::<LaminateRecord>(&text).unwrap());
}

#[test]
fn oracle_agrees_with_closed_form() {
    let text = run_ok(&["hull", "oracle", "--scenario", arg(&scenario("ftheta_oracle.json"))]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["converged"], true);
    assert_eq!(v["rejected_by_closed_form"], 0);
    assert!(v["oracle_points"].as_u64().unwrap() > v["lattice_points"].as_u64().unwrap());
}

#[test]
fn solve_writes_report_and_mesh_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = scenario("rank_one_pair.json");
    run_ok(&["solve", "--scenario", arg(&s), "--out", arg(a.path())]);
    run_ok(&["solve", "--scenario", arg(&s), "--out", arg(b.path())]);
    for f in ["report.json", "mesh.csv"] {
        assert!(std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap(), "{f} differs between runs");
    }
    let rep: SolveRecord = read_json(&a.path().join("report.json")).unwrap();
    assert!(rep.converged);
    assert!(rep.final_integral <= 0.02);
    assert!(rep.boundary_defect <= 1e-9);
    let rows = read_mesh(&a.path().join("mesh.csv")).unwrap();
    assert_eq!(rows.len(), rep.cells);
    // the reader is lossless: writing the rows again gives the same bytes
    let again = a.path().join("again.csv");
    write_mesh(&again, &rows).unwrap();
    assert!(std::fs::read(&again).unwrap() == std::fs::read(a.path().join("mesh.csv")).unwrap());
}

#[test]
fn export_oscillation() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["export", "--scenario", arg(&scenario("oscillation.json")), "--out", arg(dir.path())]);
    let rep: ExportRecord = read_json(&dir.path().join("report.json")).unwrap();
    let rows = read_mesh(&dir.path().join("mesh.csv")).unwrap();
    assert_eq!(rows.len(), rep.cells);
    assert!((rep.area - 1.0).abs() < 1e-12);
    assert!(rep.boundary_defect <= 1e-9);
    let area: f64 = rows
        .iter()
        .map(|r| {
            let [p, q, s] = r.vertices;
            0.5 * ((q[0] - p[0]) * (s[1] - p[1]) - (q[1] - p[1]) * (s[0] - p[0]))
        })
        .sum();
    assert!((area - 1.0).abs() < 1e-9);
}

#[test]
fn walk_on_the_rank_one_pair() {
    let text = run_ok(&["walk", "--scenario", arg(&scenario("rank_one_pair.json"))]);
    let recs: Vec<WalkRecord> = serde_json::from_str(&text).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(recs[0].failure.is_none());
    assert!(recs[0].final_distance.unwrap() < 0.05);
    assert!((recs[0].weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    // no scenario, unknown command
    assert_eq!(rcohull(&["solve"]).status.code(), Some(2));
    assert_eq!(rcohull(&["frobnicate"]).status.code(), Some(2));
    let base = std::fs::read_to_string(scenario("twopoint.json")).unwrap();
    let wrong_schema = write("schema.json", &base.replace("\"schema\": 1", "\"schema\": 7"));
    assert_eq!(rcohull(&["hull", "check", "--scenario", arg(&wrong_schema)]).status.code(), Some(2));
    let unknown = write("unknown.json", &base.replace("\"schema\": 1", "\"schema\": 1, \"colour\": 3"));
    assert_eq!(rcohull(&["hull", "check", "--scenario", arg(&unknown)]).status.code(), Some(2));
    let bad_shape = write("shape.json", &base.replace("[[1, 0], [0, 1]]", "[[1, 0, 0], [0, 1]]"));
    assert_eq!(rcohull(&["hull", "check", "--scenario", arg(&bad_shape)]).status.code(), Some(2));
    assert_eq!(rcohull(&["hull", "check", "--scenario", arg(&scenario("twopoint.json")), "--tol", "-1"]).status.code(), Some(2));
    // a boundary point is not in int K, so its walk cannot start
    let out = rcohull(&["walk", "--scenario", arg(&scenario("twopoint.json"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn shipped_scenarios_validate() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")).unwrap() {
        let p = entry.unwrap().path();
        let s = Scenario::parse(&std::fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::parse(&text).unwrap(), s);
    }
}
