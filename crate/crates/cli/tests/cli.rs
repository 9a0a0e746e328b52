//! End-to-end behaviour of the `ivim` binary: output layout, exit codes and
//! the export round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ivim_core::ProblemFile;
use tempfile::TempDir;

fn ivim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivim"))
        .args(args)
        .output()
        .expect("spawn ivim")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn solve_writes_one_row_per_node() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let run = ivim(&[
        "solve",
        "--problem",
        "ex1",
        "--n",
        "57",
        "--m",
        "5",
        "--out-dir",
        path_str(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let (header, rows) = csv_rows(&out.join("solution.csv"));
    assert_eq!(header, ["t", "u1", "exact1", "abs_err1", "log10_err"]);
    assert_eq!(rows.len(), 57);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[56][0].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[0][4], "-inf");
    let s = summary(&out);
    assert_eq!(s["iterations_run"], 5);
    assert_eq!(s["config"]["n"], 57);
    assert!(s["max_abs_error"].as_f64().unwrap() > 0.0);
    assert!(s["wall_time_seconds"].as_f64().is_some());
}

#[test]
fn system_solution_has_a_column_per_component() {
    let tmp = TempDir::new().unwrap();
    let run = ivim(&[
        "solve",
        "--problem",
        "ex3",
        "--n",
        "31",
        "--m",
        "4",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert!(run.status.success());
    let (header, rows) = csv_rows(&tmp.path().join("solution.csv"));
    assert_eq!(
        header,
        [
            "t",
            "u1",
            "u2",
            "exact1",
            "exact2",
            "abs_err1",
            "abs_err2",
            "log10_err"
        ]
    );
    assert_eq!(rows.len(), 31);
}

#[test]
fn problem_without_exact_solution_omits_error_columns() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("decay.json");
    fs::write(
        &file,
        r#"{"name":"decay","interval":{"a":0,"T":2},"equations":[{"alpha":1,"rhs":"-u"}],"initial":[3]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let run = ivim(&[
        "solve",
        "--problem",
        path_str(&file),
        "--n",
        "41",
        "--m",
        "3",
        "--out-dir",
        path_str(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let (header, rows) = csv_rows(&out.join("solution.csv"));
    assert_eq!(header, ["t", "u1"]);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 3.0);
    assert!(summary(&out)["max_abs_error"].is_null());
}

#[test]
fn stop_tolerance_ends_the_iteration_early() {
    let tmp = TempDir::new().unwrap();
    let run = ivim(&[
        "solve",
        "--problem",
        "ex1",
        "--n",
        "101",
        "--m",
        "50",
        "--stop-tol",
        "1e-6",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert!(run.status.success());
    let iterations = summary(tmp.path())["iterations_run"].as_u64().unwrap();
    assert!(iterations < 50 && iterations > 5, "{iterations}");
}

#[test]
fn malformed_problem_exits_1_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("bad.json");
    fs::write(&file, "{ \"name\": ").unwrap();
    let out = tmp.path().join("out");
    let run = ivim(&[
        "solve",
        "--problem",
        path_str(&file),
        "--n",
        "5",
        "--m",
        "1",
        "--out-dir",
        path_str(&out),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&run.stderr).contains("JSON"));
}

#[test]
fn bad_expression_reports_its_position() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("bad.json");
    fs::write(
        &file,
        r#"{"name":"x","interval":{"a":0,"T":1},"equations":[{"alpha":0,"rhs":"u + $"}],"initial":[0]}"#,
    )
    .unwrap();
    let run = ivim(&[
        "solve",
        "--problem",
        path_str(&file),
        "--n",
        "5",
        "--m",
        "1",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert_eq!(run.status.code(), Some(1));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(
        err.contains("equations[0].rhs") && err.contains("offset 4"),
        "{err}"
    );
}

#[test]
fn unknown_variable_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("bad.json");
    fs::write(
        &file,
        r#"{"name":"x","interval":{"a":0,"T":1},"equations":[{"alpha":0,"rhs":"u + y"}],"initial":[0]}"#,
    )
    .unwrap();
    let run = ivim(&[
        "solve",
        "--problem",
        path_str(&file),
        "--n",
        "5",
        "--m",
        "1",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("y at offset 4"));
}

#[test]
fn non_dividing_rk4_step_exits_1() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let run = ivim(&[
        "compare",
        "--problem",
        "ex1",
        "--n",
        "11",
        "--m",
        "2",
        "--rk4-step",
        "0.3",
        "--out-dir",
        path_str(&out),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn divergence_exits_2() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("blowup.json");
    fs::write(
        &file,
        r#"{"name":"blowup","interval":{"a":0,"T":2},"equations":[{"alpha":0,"rhs":"u^3"}],"initial":[5]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let run = ivim(&[
        "solve",
        "--problem",
        path_str(&file),
        "--n",
        "50",
        "--m",
        "20",
        "--out-dir",
        path_str(&out),
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("diverged"));
    assert!(!out.exists());
}

#[test]
fn unwritable_output_exits_3() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("sub");
    let run = ivim(&[
        "solve",
        "--problem",
        "ex1",
        "--n",
        "5",
        "--m",
        "1",
        "--out-dir",
        path_str(&out),
    ]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn invalid_arguments_exit_1() {
    let tmp = TempDir::new().unwrap();
    for args in [
        vec!["solve", "--problem", "ex1", "--n", "1", "--m", "1"],
        vec!["solve", "--problem", "ex1", "--n", "5", "--m", "0"],
        vec!["solve", "--problem", "ex9", "--n", "5", "--m", "1"],
        vec![
            "solve",
            "--problem",
            "ex1",
            "--n",
            "5",
            "--m",
            "1",
            "--threads",
            "0",
        ],
        vec!["solve", "--problem", "ex1", "--n", "abc", "--m", "1"],
        vec!["solve", "--problem", "ex1", "--m", "1"],
        vec!["convergence", "--problem", "ex1", "--n-list", "9,17"],
    ] {
        let mut full = args.clone();
        full.extend(["--out-dir", path_str(tmp.path())]);
        assert_eq!(ivim(&full).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn sweep_orders_only_between_doubled_grids() {
    let tmp = TempDir::new().unwrap();
    let run = ivim(&[
        "convergence",
        "--problem",
        "ex1",
        "--n-list",
        "21,41,61,121",
        "--m",
        "8",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert!(run.status.success());
    let (header, rows) = csv_rows(&tmp.path().join("convergence.csv"));
    assert_eq!(header, ["n", "m", "max_abs", "observed_order"]);
    assert_eq!(rows.len(), 4);
    assert!(rows[0][3].is_empty());
    assert!(!rows[1][3].is_empty()); // 20 -> 40 cells
    assert!(rows[2][3].is_empty()); // 40 -> 60 cells
    assert!(!rows[3][3].is_empty()); // 60 -> 120 cells
}

#[test]
fn singleton_sweep_has_one_row_and_no_order() {
    let tmp = TempDir::new().unwrap();
    let run = ivim(&[
        "convergence",
        "--problem",
        "ex3",
        "--n-list",
        "33",
        "--m",
        "5",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert!(run.status.success());
    let (_, rows) = csv_rows(&tmp.path().join("convergence.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0][3].is_empty());
}

#[test]
fn iteration_sweep_reduces_the_error() {
    let tmp = TempDir::new().unwrap();
    let run = ivim(&[
        "convergence",
        "--problem",
        "ex3",
        "--m-list",
        "1,2,4,8",
        "--n",
        "101",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert!(run.status.success());
    let (_, rows) = csv_rows(&tmp.path().join("convergence.csv"));
    let errs: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(errs.len(), 4);
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn compare_on_a_constant_solution_has_zero_gaps() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("still.json");
    fs::write(
        &file,
        r#"{"name":"still","interval":{"a":0,"T":1},"equations":[{"alpha":0,"rhs":"0"}],"initial":[2.5]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let run = ivim(&[
        "compare",
        "--problem",
        path_str(&file),
        "--n",
        "21",
        "--m",
        "3",
        "--rk4-step",
        "0.01",
        "--out-dir",
        path_str(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let (header, rows) = csv_rows(&out.join("compare.csv"));
    assert_eq!(header, ["t", "ivim1", "rk4_1", "gap1"]);
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() == 0.0));
    assert_eq!(summary(&out)["max_gap"].as_f64(), Some(0.0));
}

#[test]
fn compare_gap_tracks_the_method_error() {
    let tmp = TempDir::new().unwrap();
    let run = ivim(&[
        "compare",
        "--problem",
        "ex1",
        "--n",
        "257",
        "--m",
        "10",
        "--rk4-step",
        "0.0001",
        "--out-dir",
        path_str(tmp.path()),
    ]);
    assert!(run.status.success());
    let gap = summary(tmp.path())["max_gap"].as_f64().unwrap();
    assert!((0.0035..0.0040).contains(&gap), "{gap}");
}

#[test]
fn exported_problem_reloads_and_solves_identically() {
    let tmp = TempDir::new().unwrap();
    for name in ["ex1", "ex2", "ex3"] {
        let file = tmp.path().join(format!("{name}.json"));
        let export = ivim(&["export", "--problem", name, "--out", path_str(&file)]);
        assert!(export.status.success());
        let stdout = ivim(&["export", "--problem", name]).stdout;
        assert_eq!(fs::read(&file).unwrap(), stdout);
        let parsed = ProblemFile::from_json(&String::from_utf8(stdout).unwrap()).unwrap();
        assert_eq!(parsed.name, name);

        let (builtin_out, file_out) = (
            tmp.path().join(format!("{name}-b")),
            tmp.path().join(format!("{name}-f")),
        );
        for (problem, out) in [(name, &builtin_out), (path_str(&file), &file_out)] {
            let run = ivim(&[
                "solve",
                "--problem",
                problem,
                "--n",
                "65",
                "--m",
                "6",
                "--out-dir",
                path_str(out),
            ]);
            assert!(run.status.success());
        }
        assert_eq!(
            fs::read(builtin_out.join("solution.csv")).unwrap(),
            fs::read(file_out.join("solution.csv")).unwrap(),
            "{name}"
        );
    }
}
