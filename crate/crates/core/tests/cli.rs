use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

/// Writes `config` plus an `[output]` section pointing into `dir` and runs the binary.
fn run_with_output(dir: &Path, command: &str, config: &str, output: &str) -> Output {
    let path = dir.join("config.toml");
    let out_dir = dir.join("out");
    fs::write(&path, format!("{config}\n[output]\ndir = {:?}\n{output}", out_dir.to_str().unwrap())).unwrap();
    Command::new(env!("CARGO_BIN_EXE_dbc")).args([command, "--config", path.to_str().unwrap()]).output().unwrap()
}

fn run(dir: &Path, command: &str, config: &str) -> Output {
    run_with_output(dir, command, config, "")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn study_writes_table_and_report() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "study", "[study]\nlevels = [[4, 4], [6, 5]]\n");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("out/table.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), table);
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("n,M,h,k,sigma,err_state"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["levels"].as_array().unwrap().len(), 2);

    // reruns are byte-identical
    let again = run(dir.path(), "study", "[study]\nlevels = [[4, 4], [6, 5]]\njobs = 2\n");
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("out/table.csv")).unwrap(), table);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "study", "[solver]\ntoll = 1e-8\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("toll"), "{}", stderr(&out));

    let out = run(dir.path(), "solve", "[problem]\ncase = \"example99\"\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("example51"), "{}", stderr(&out));

    let out = run(dir.path(), "study", "[study]\nlevels = []\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("levels must be nonempty"));

    let out = run(dir.path(), "check", "[problem]\nlambda = -1.0\n");
    assert_eq!(out.status.code(), Some(1));

    let out = run(dir.path(), "check", "[check]\nsuites = [\"everything\"]\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("coercivity"));

    let missing = Command::new(env!("CARGO_BIN_EXE_dbc"))
        .args(["solve", "--config", dir.path().join("absent.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let usage = Command::new(env!("CARGO_BIN_EXE_dbc")).arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn nonconvergence_exits_with_two_and_keeps_partial_report() {
    let dir = TempDir::new().unwrap();
    let config = "[problem]\nq_b = 0.01\n[solver]\nmax_outer = 5\n[study]\nlevels = [[2, 2], [4, 4]]\n";
    let out = run(dir.path(), "study", config);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["levels"].as_array().unwrap().len(), 1);
}

#[test]
fn check_passes_on_the_default_mesh() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "check", "");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn solve_writes_snapshots_and_matrices() {
    let dir = TempDir::new().unwrap();
    let out = run_with_output(dir.path(), "solve", "", "dump_matrices = true\n");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let snap = dir.path().join("out/snapshots");
    // 9 x 9 vertices on 5 interior time levels
    let control = fs::read_to_string(snap.join("control.csv")).unwrap();
    assert_eq!(control.lines().count(), 81 * 5 + 1);
    assert_eq!(control.lines().next(), Some("level,t,node,x,y,value"));
    let state = fs::read_to_string(snap.join("state.csv")).unwrap();
    assert_eq!(state.lines().count(), 81 * 6 + 1);
    assert!(snap.join("adjoint.csv").exists());
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/diagnostics.json")).unwrap()).unwrap();
    assert!(diag["lower_active"].as_u64().unwrap() > 0);
    for name in ["mass", "stiffness", "seminorm"] {
        let mtx = fs::read_to_string(dir.path().join(format!("out/matrices/{name}.mtx"))).unwrap();
        assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real general"), "{name}");
    }
}

#[test]
fn sentinel_bounds_leave_every_constraint_inactive() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "solve", "[problem]\nq_a = -1e6\nq_b = 1e6\n[solve]\nn = 4\nm = 4\n");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["lower_active"], 0);
    assert_eq!(diag["upper_active"], 0);
    assert_eq!(diag["outer_iterations"], 1);
}
