use levy_bsde::experiments::{run_comparison, run_experiment, run_truncation_study, ExperimentConfig};
use levy_bsde::generators::{generator_from_ref, GeneratorRef};
use levy_bsde::levy_model::{IncrementLaw, LevyModel, Mark, TimeGrid};
use levy_bsde::mc_solver::{solve_mc, McConfig};
use levy_bsde::terminal::TerminalFunctional;

fn one_mark() -> (LevyModel, TimeGrid) {
    (
        LevyModel::new(0.1, 1.0, vec![Mark::new(0.5, 1.0)]).unwrap(),
        TimeGrid::new(1.0, 4).unwrap(),
    )
}

#[test]
fn reports_are_reproducible_apart_from_timing() {
    let (m, g) = one_mark();
    let cfg = ExperimentConfig::new("compare", &m, &g);
    let a = run_comparison(&cfg).unwrap();
    let b = run_comparison(&cfg).unwrap();
    assert_eq!(a.reproducible_json().unwrap(), b.reproducible_json().unwrap());
    assert!(!a.reproducible_json().unwrap().contains("elapsed_ms"));
    assert!(a.to_json().unwrap().contains("elapsed_ms"));
}

#[test]
fn report_files_round_trip() {
    let (m, g) = one_mark();
    let cfg = ExperimentConfig::new("truncate-study", &m, &g);
    let r = run_truncation_study(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = r.write(dir.path()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["experiment"], "truncate-study");
    assert_eq!(v["cases"].as_array().unwrap().len(), r.cases.len());
}

#[test]
fn config_json_drives_the_dispatcher() {
    let text = r#"{
        "experiment": "counterexample",
        "model": {"drift": 0.0, "sigma": 0.0, "marks": [{"x": 1.0, "lambda": 2.0}], "T": 1.0, "steps": 4},
        "terminals": ["zero", "jump_indicator:0"]
    }"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let r = run_experiment(&cfg).unwrap();
    assert!(r.all_passed(), "{}", r.summary());
    assert_eq!(r.cases[0].records["margin"], 4.0625);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let text = r#"{"experiment": "compare", "model": {"drift": 0.0, "sigma": 1.0, "marks": [], "T": 1.0, "steps": 2}, "typo": 1}"#;
    assert!(ExperimentConfig::from_json(text).is_err());
}

#[test]
fn monte_carlo_is_deterministic_per_seed() {
    let (m, g) = one_mark();
    let f = generator_from_ref(&GeneratorRef::named("sin_y"), &m).unwrap();
    let xi = TerminalFunctional::by_name("tanh_x", 1).unwrap();
    let mut cfg = McConfig::new(4000, 5);
    cfg.bootstrap = 4;
    cfg.law = IncrementLaw::Lattice;
    let a = solve_mc(&m, &g, &f, &xi, &cfg).unwrap();
    let b = solve_mc(&m, &g, &f, &xi, &cfg).unwrap();
    assert_eq!(a.y0, b.y0);
    assert_eq!(a.y0_se, b.y0_se);
    cfg.seed = 6;
    let c = solve_mc(&m, &g, &f, &xi, &cfg).unwrap();
    assert_ne!(a.y0, c.y0);
}
