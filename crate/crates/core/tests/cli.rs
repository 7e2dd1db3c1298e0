use std::path::Path;
use std::process::{Command, Output};

use agedist_core::io;

const DATA: &str = "\
country,age_group,population
Mono,0-4,50
Mono,5-9,30
Mono,10-14,20
Hump,0-4,30
Hump,5-9,40
Hump,10-14,30
Gap,0-4,10
Gap,5-9,0
Gap,10-14,5
";

fn agedist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agedist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    std::fs::write(&csv, DATA).unwrap();
    let csv = csv.to_str().unwrap().to_string();
    (dir, csv)
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn classify_reports_routes_and_skips() {
    let (_dir, csv) = setup();
    let out = agedist(&["classify", "--input", &csv]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Mono,3,monotone,model1,"));
    assert!(text.contains("Hump,3,non-monotone,model2|curve-fit,5-9"));
    assert!(!text.contains("Gap,"));
    assert!(stderr(&out).contains("skipped Gap"));
}

#[test]
fn solve_writes_loadable_params() {
    let (dir, csv) = setup();
    let out_file = path(dir.path(), "mono.json");
    let out = agedist(&["solve", "--input", &csv, "--country", "Mono", "--model", "1", "--pn", "0.5", "--out", &out_file]);
    assert!(out.status.success(), "{}", stderr(&out));
    let file = io::load_params(Path::new(&out_file)).unwrap();
    for (got, want) in file.params.survival.as_slice().iter().zip([0.6, 1.0 / 3.0, 0.5]) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
    assert_eq!(file.params.provenance["free_param"], "explicit");

    let hump = path(dir.path(), "hump.json");
    let out = agedist(&["solve", "--input", &csv, "--country", "Hump", "--model", "2", "--seed", "3", "--out", &hump]);
    assert!(out.status.success(), "{}", stderr(&out));
    let file = io::load_params(Path::new(&hump)).unwrap();
    assert!(file.params.activation.is_some());
    assert!(file.params.diagnostics["mae"] < 1e-4);
    assert_eq!(file.de_config.unwrap().seed, 3);
}

#[test]
fn failures_exit_nonzero_with_error_line() {
    let (dir, csv) = setup();
    let out_file = path(dir.path(), "x.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", "--input", &csv, "--country", "Hump", "--model", "1", "--out", &out_file],
        vec!["solve", "--input", &csv, "--country", "Nowhere", "--out", &out_file],
        vec!["solve", "--input", &csv, "--country", "Gap", "--out", &out_file],
        vec!["solve", "--input", &csv, "--country", "Mono", "--pn", "abc", "--out", &out_file],
        vec!["classify", "--input", "/nonexistent/file.csv"],
        vec!["classify", "--input", &csv, "--pop-col", "people"],
        vec!["simulate", "--params", &csv, "--out", &out_file],
    ];
    for args in cases {
        let out = agedist(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = stderr(&out);
        assert!(err.lines().any(|l| l.starts_with("error: ")), "{args:?}: {err}");
    }
}

#[test]
fn fit_curve_and_simulate_chain() {
    let (dir, csv) = setup();
    let params = path(dir.path(), "fit.json");
    let report = path(dir.path(), "fit.csv");
    let out = agedist(&["fit-curve", "--input", &csv, "--country", "Hump", "--out", &params, "--fit-report", &report]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = std::fs::read_to_string(&report).unwrap();
    assert_eq!(table.lines().count(), 4);
    let file = io::load_params(Path::new(&params)).unwrap();
    assert!(file.curve.is_some());
    assert!(file.original.is_some());

    let sim = path(dir.path(), "sim.json");
    let traj = path(dir.path(), "traj.csv");
    let out = agedist(&[
        "simulate", "--params", &params, "--agents", "1000", "--steps", "40", "--burn-in", "20", "--seed", "1",
        "--trajectory", &traj, "--out", &sim,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&traj).unwrap().lines().count(), 42);
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sim).unwrap()).unwrap();
    assert_eq!(result["result"]["num_agents"], 1000);
    assert_eq!(result["config"]["seed"], 1);
}

#[test]
fn pipeline_writes_report_tree() {
    let (dir, csv) = setup();
    let out_dir = path(dir.path(), "out");
    let out = agedist(&["pipeline", "--input", &csv, "--out-dir", &out_dir, "--seed", "2", "--agents", "2000"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("countries: 2, model1: 1, model2: 1"));
    for f in ["summary.json", "params/Mono.json", "params/Hump.json", "plots/overlay_Hump.csv", "plots/wasserstein_histogram.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn custom_column_names() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    std::fs::write(&csv, "nation,band,count\nX,0-4,5\nX,5-9,3\nX,10-14,2\n").unwrap();
    let out = agedist(&[
        "classify", "--input", csv.to_str().unwrap(), "--country-col", "nation", "--age-col", "band", "--pop-col", "count",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("X,3,monotone"));
}
