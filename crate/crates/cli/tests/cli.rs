use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_censored-lds"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

const FULL: &str = r#"
horizons = [100]
seeds = [7]

[system]
kind = "matrix"
entries = [[0.5]]

[schedule]
type = "static"
set = { type = "full_space", dim = 1 }
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_one_observed_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FULL);
    let out = dir.path().join("traj");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("T100_seed7.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 101);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("1")));
    assert!(out.join("T100_seed7.meta.toml").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("pairs=100"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FULL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    }
    for f in ["T100_seed7.csv", "T100_seed7.meta.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn missing_system_matrix_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &FULL.replace("entries = [[0.5]]\n", ""));
    let o = run(&["simulate", "--config", &cfg]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("entries"), "{err}");
}

#[test]
fn estimate_reports_and_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &FULL.replace("[100]", "[20000]").replace("seeds = [7]", "seeds = [3]"),
    );
    let out = dir.path().join("run");
    assert!(run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let csv = out.join("T20000_seed3.csv");
    let o = run(&["estimate", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("T20000_seed3.estimate.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 1);
    assert!(report.contains("\"generic_bound\":true"));
    assert!(out.join("T20000_seed3.diagnostics.jsonl").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    let err: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("error (Frobenius) = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err <= 0.05, "{err}");

    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[42] = "42,1,0,oops";
    fs::write(&csv, lines.join("\n")).unwrap();
    let o = run(&["estimate", csv.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 42"), "{err}");
}

#[test]
fn estimate_surfaces_insufficient_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &FULL.replace(
            "{ type = \"full_space\", dim = 1 }",
            "{ type = \"halfspace\", normal = [1.0], offset = 3.5 }",
        ),
    );
    let out = dir.path().join("run");
    assert!(run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let o = run(&["estimate", out.join("T100_seed7.csv").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("insufficient pairs: found"), "{err}");
}

#[test]
fn experiment_writes_report_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &FULL.replace("[100]", "[200, 800]").replace("[7]", "[1, 2]"));
    let out = dir.path().join("exp");
    let o = run(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--parallelism", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.jsonl")).unwrap();
    assert_eq!(report.lines().filter(|l| l.contains("\"record\":\"cell\"")).count(), 4);
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 5);
    let svg = fs::read_to_string(out.join("error_vs_horizon.svg")).unwrap();
    assert!(svg.contains("class=\"reference\""));

    // Reports are byte-identical across runs and thread counts.
    let o = run(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--parallelism", "1"]);
    assert!(o.status.success());
    assert_eq!(report, fs::read_to_string(out.join("report.jsonl")).unwrap());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FULL);
    let out = dir.path().join("s");
    assert!(run(&["simulate", "--config", &cfg, "--seed", "99", "--out", out.to_str().unwrap()]).status.success());
    assert!(out.join("T100_seed99.csv").exists());
}
