use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const ONE_MARK: &str = r#"{"drift": 0.1, "sigma": 1.0, "marks": [{"x": 0.5, "lambda": 1.0}], "T": 1.0, "steps": 4}"#;

fn run(sub: &str, config: &str, out: &Path) -> Output {
    let cfg = out.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_levy-bsde"))
        .args([sub, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn report(out: &Path, experiment: &str) -> serde_json::Value {
    let text = fs::read_to_string(out.join(format!("{experiment}_report.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn compare_suite_exits_zero_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("compare", &format!(r#"{{"experiment": "compare", "model": {ONE_MARK}}}"#), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(dir.path().join("compare_verdicts.csv")).unwrap();
    assert!(csv.starts_with("case,kind,verdict,lhs,relation,rhs,passed"));
    assert!(report(dir.path(), "compare")["cases"].as_array().unwrap().len() >= 10);
}

#[test]
fn counterexample_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "counterexample",
        &format!(r#"{{"experiment": "counterexample", "model": {ONE_MARK}}}"#),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(dir.path(), "counterexample")["cases"][0]["records"]["margin"], 4.0625);
}

#[test]
fn unmet_preconditions_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{"drift": 0.0, "sigma": 1.0, "marks": [{"x": 2.0, "lambda": 1.0}], "T": 1.0, "steps": 3}"#;
    let o = run("truncate-study", &format!(r#"{{"experiment": "truncate-study", "model": {model}}}"#), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("UNMET"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("apriori", r#"{"experiment": "apriori"}"#, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn solve_lattice_and_simulate_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"experiment": "solve-lattice", "model": {ONE_MARK}, "generators": [{{"name": "sin_y"}}], "terminals": ["tanh_x"]}}"#
    );
    let o = run("solve-lattice", &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(dir.path().join("lattice_solution.csv")).unwrap();
    // 1 + 4 + 16 + 64 + 256 nodes plus the header.
    assert_eq!(rows.lines().count(), 342);

    let sim = format!(r#"{{"experiment": "simulate", "model": {ONE_MARK}, "solver": {{"paths": 50}}}}"#);
    let o = run("simulate", &sim, dir.path());
    assert!(o.status.code().is_some_and(|c| c < 2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("paths.csv").exists());
}

#[test]
fn bihari_prints_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"c": 2.0, "K": {"knots": [0.0, 1.0, 2.0], "values": [0.5, 0.25]}, "rho": "identity", "t": 0.0, "T": 2.0}"#;
    let o = run("bihari", cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find(|l| l.starts_with("bound: ")).unwrap();
    let bound: f64 = line["bound: ".len()..].parse().unwrap();
    assert!((bound - 2.0 * 0.75f64.exp()).abs() < 1e-12);
}
