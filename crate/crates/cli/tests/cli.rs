//! End-to-end checks of the `minimax` binary: exit codes, output shape and
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ncsc::experiment::{ExperimentConfig, CSV_HEADER};
use tempfile::TempDir;

fn minimax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minimax"))
        .args(args)
        .env("NCSC_THREADS", "2")
        .output()
        .expect("spawn minimax")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// All columns except the trailing wall time.
fn without_time(table: &str) -> Vec<String> {
    table
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

const QUAD_PROBLEM: &str = r#"{"kind": "quadratic", "seed": 5, "n": 3, "m": 2}"#;
const QUAD_STOP: &str = r#"{"grad_tol": 1e-9, "max_iters": 5000}"#;

fn quad_config(solver: &str, output: &str) -> String {
    format!(
        r#"{{"problem": {QUAD_PROBLEM}, "solver": {solver}, "stop": {QUAD_STOP}, "output": {output}}}"#
    )
}

#[test]
fn run_reaches_quadratic_solution() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("out.csv");
    let trace = dir.path().join("trace.csv");
    let output = format!(r#"{{"csv": {:?}, "trace": {:?}}}"#, csv, trace);
    let text = quad_config(r#"{"solver": "alg2-bb", "ls": {"tau": 1.0}}"#, &output);
    let cfg_path = write_config(dir.path(), "run.json", &text);

    let out = minimax(&["run", cfg_path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let table = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines, [CSV_HEADER, lines[1]]);
    assert!(lines[1].starts_with("GDA-BB,"));

    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("k,merit,"));
    assert!(trace_text.lines().count() > 2);

    // the reported objective matches the closed form
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    let inst = cfg.problem.build().unwrap();
    let sol = inst.solution.unwrap();
    let f_star = inst.oracle.value(sol.x(), sol.y());
    let f: f64 = lines[1].split(',').nth(5).unwrap().parse().unwrap();
    assert!(
        (f - f_star).abs() <= 1e-6 * (1.0 + f_star.abs()),
        "{f} vs {f_star}"
    );
}

#[test]
fn missing_data_file_exits_one_without_output() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("out.csv");
    let text = format!(
        r#"{{"problem": {{"kind": "csv", "path": "/nonexistent/points.csv"}},
            "solver": {{"solver": "alg2-bb"}}, "output": {{"csv": {:?}}}}}"#,
        csv
    );
    let cfg_path = write_config(dir.path(), "bad.json", &text);
    let out = minimax(&["run", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!csv.exists());
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(names.len(), 1, "only the config may remain");
}

#[test]
fn malformed_config_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg_path = write_config(dir.path(), "bad.json", r#"{"problem": {"kind": "quadratic"#);
    assert_eq!(
        minimax(&["run", cfg_path.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn run_rejects_multiple_solvers() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        r#"{{"problem": {QUAD_PROBLEM}, "solvers": [{{"solver": "alg2-bb"}}, {{"solver": "gdbb"}}]}}"#
    );
    let cfg_path = write_config(dir.path(), "two.json", &text);
    assert_eq!(
        minimax(&["run", cfg_path.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn exhausted_budget_exits_two() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        r#"{{"problem": {QUAD_PROBLEM}, "solver": {{"solver": "ttgda", "eta_x": 1e-4, "eta_y": 1e-3}},
            "stop": {{"grad_tol": 1e-12, "max_iters": 10}}}}"#
    );
    let cfg_path = write_config(dir.path(), "short.json", &text);
    let out = minimax(&["run", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).starts_with(CSV_HEADER));
}

#[test]
fn bench_keeps_config_order_and_matches_single_runs() {
    let dir = TempDir::new().unwrap();
    let solvers = [
        r#"{"solver": "alg2-bb", "ls": {"tau": 1.0}}"#,
        r#"{"solver": "gdbb", "tau": 1.0}"#,
        r#"{"solver": "alg2-pf", "ls": {"tau": 1.0}}"#,
    ];
    let text = format!(
        r#"{{"problem": {QUAD_PROBLEM}, "solvers": [{}], "stop": {QUAD_STOP}}}"#,
        solvers.join(", ")
    );
    let cfg_path = write_config(dir.path(), "bench.json", &text);
    let out = minimax(&["bench", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let table = without_time(&stdout(&out));
    assert_eq!(table[0], CSV_HEADER.rsplit_once(',').unwrap().0);
    let labels: Vec<&str> = table[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(labels, ["GDA-BB", "GD-BB", "GDA-PF"]);

    for (i, solver) in solvers.iter().enumerate() {
        let single = write_config(
            dir.path(),
            &format!("s{i}.json"),
            &quad_config(solver, "{}"),
        );
        let out = minimax(&["run", single.to_str().unwrap()]);
        assert_eq!(without_time(&stdout(&out))[1], table[i + 1]);
    }
}

#[test]
fn bench_writes_one_trace_per_solver() {
    let dir = TempDir::new().unwrap();
    let traces = dir.path().join("traces");
    std::fs::create_dir(&traces).unwrap();
    let text = format!(
        r#"{{"problem": {QUAD_PROBLEM}, "solvers": [{{"solver": "alg2-bb"}}, {{"solver": "gdbb"}}],
            "stop": {QUAD_STOP}, "output": {{"trace_dir": {:?}}}}}"#,
        traces
    );
    let cfg_path = write_config(dir.path(), "bench.json", &text);
    assert_eq!(
        minimax(&["bench", cfg_path.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let mut names: Vec<String> = std::fs::read_dir(&traces)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["0_GDA-BB.csv", "1_GD-BB.csv"]);
}

#[test]
fn synthetic_bb_run_uses_no_second_derivatives() {
    let dir = TempDir::new().unwrap();
    let text = r#"{"problem": {"kind": "synthetic", "seed": 3, "d": 5, "N": 8},
                   "solver": {"solver": "alg2-bb"}, "stop": {"grad_tol": 1e-6, "max_iters": 20000}}"#;
    let cfg_path = write_config(dir.path(), "syn.json", text);
    let out = minimax(&["run", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "GDA-BB");
    assert_eq!(row[4], "0");
}

#[test]
fn verify_passes_and_flags_a_corrupted_gradient() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let out = minimax(&[
        "verify",
        "--lemma-samples",
        "100",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["passed"], serde_json::Value::Bool(true));
    assert_eq!(
        std::fs::read_to_string(&report).unwrap().trim(),
        stdout(&out).trim()
    );

    let out = minimax(&["verify", "--lemma-samples", "100", "--corrupt-gradient"]);
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr
            .lines()
            .any(|l| l.starts_with("violation:") && l.ends_with("/grad_f")),
        "{stderr}"
    );
}

#[test]
fn gen_data_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = minimax(&[
            "gen-data",
            "--seed",
            "7",
            "--d",
            "4",
            "-n",
            "6",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text
        .lines()
        .all(|l| l.split(',').count() == 5 && l.split(',').all(|v| v.parse::<f64>().is_ok())));
}

#[test]
fn generated_data_feeds_a_csv_problem() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("points.csv");
    let out = minimax(&[
        "gen-data",
        "--seed",
        "2",
        "--d",
        "3",
        "-n",
        "5",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = format!(
        r#"{{"problem": {{"kind": "csv", "path": {:?}}}, "solver": {{"solver": "gdbb"}},
            "stop": {{"grad_tol": 1e-6, "max_iters": 20000}}}}"#,
        data
    );
    let cfg_path = write_config(dir.path(), "csv.json", &text);
    let out = minimax(&["run", cfg_path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).lines().nth(1).unwrap().starts_with("GD-BB,"));
}

#[test]
fn invalid_thread_count_exits_one() {
    let out = Command::new(env!("CARGO_BIN_EXE_minimax"))
        .args([
            "gen-data",
            "--seed",
            "1",
            "--d",
            "2",
            "-n",
            "2",
            "--out",
            "/nonexistent/x.csv",
        ])
        .env("NCSC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        // the libsvm example points at a dataset that is not shipped
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        if parsed["problem"]["kind"] != "libsvm" {
            ExperimentConfig::from_json(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
        seen += 1;
    }
    assert_eq!(seen, 3);
}
