use serde_json::json;

use super::{condition_verdict, Case, ExperimentConfig, Report, Verdict};
use crate::error::{Error, Result};
use crate::generators::{check_a_gamma, check_dominated, generator_from_ref, GeneratorRef, GeneratorSpec};
use crate::lattice::{tree_node_count, branching_factor, ScenarioTree, SolverOptions};
use crate::levy_model::{LevyModel, TimeGrid};
use crate::terminal::TerminalFunctional;

/// One comparison instance `(f, ξ)` against `(f', ξ')`.
#[derive(Clone)]
pub struct ComparisonCase {
    pub label: String,
    pub f: GeneratorSpec,
    pub xi: TerminalFunctional,
    pub f_prime: GeneratorSpec,
    pub xi_prime: TerminalFunctional,
}

impl ComparisonCase {
    pub fn new(f: GeneratorSpec, xi: TerminalFunctional, f_prime: GeneratorSpec, xi_prime: TerminalFunctional) -> Self {
        Self {
            label: format!("{} / {} vs {} / {}", f.name(), xi.name(), f_prime.name(), xi_prime.name()),
            f,
            xi,
            f_prime,
            xi_prime,
        }
    }
}

fn gen(model: &LevyModel, r: GeneratorRef) -> Result<GeneratorSpec> {
    generator_from_ref(&r, model)
}

fn term(model: &LevyModel, name: &str) -> Result<TerminalFunctional> {
    TerminalFunctional::by_name(name, model.num_marks())
}

/// Catalog pairs with `f ≤ f'` and `ξ ≤ ξ'`.
///
/// Generators are compared either against themselves or against a constant upward
/// shift; with one mark, each pair keeps every discrete one-step weight of the
/// linearized difference non-negative at moderate `dt`.
pub fn default_comparison_suite(model: &LevyModel) -> Result<Vec<ComparisonCase>> {
    let j = model.num_marks();
    let named = |n: &str| gen(model, GeneratorRef::named(n));
    let linear = || {
        gen(
            model,
            GeneratorRef {
                name: "linear".into(),
                a: Some(0.5),
                b: Some(0.3),
                c: Some((0..j).map(|i| if i % 2 == 0 { -0.5 } else { 0.5 }).collect()),
                ..Default::default()
            },
        )
    };
    let x_t = term(model, "x_T")?;
    let tanh_x = term(model, "tanh_x")?;
    let clip_x = term(model, "clip_x")?;
    let pos_x = term(model, "pos_x")?;

    let mut suite = vec![
        ComparisonCase::new(named("zero")?, x_t.clone(), named("zero")?, x_t.shifted(0.5)),
        ComparisonCase::new(named("zero")?, x_t.clone(), named("constant")?, x_t.clone()),
        ComparisonCase::new(named("linear_y")?, tanh_x.clone(), named("linear_y")?.shifted(0.2), tanh_x.shifted(0.1)),
        ComparisonCase::new(named("sin_y")?, clip_x.clone(), named("sin_y")?.shifted(0.1), pos_x.clone()),
        ComparisonCase::new(linear()?, x_t.clone(), linear()?.shifted(0.3), x_t.shifted(0.2)),
        ComparisonCase::new(linear()?, clip_x.clone(), linear()?, pos_x.clone()),
        ComparisonCase::new(named("zero")?, tanh_x.clone(), named("abs_z")?, tanh_x.clone()),
        ComparisonCase::new(named("abs_z")?, clip_x.clone(), named("abs_z")?, pos_x.clone()),
        ComparisonCase::new(named("intro_example")?, x_t.clone(), named("intro_example")?.shifted(0.5), x_t.clone()),
        ComparisonCase::new(named("intro_example")?, tanh_x.clone(), named("intro_example")?, tanh_x.shifted(0.25)),
        ComparisonCase::new(named("sin_y")?, tanh_x.clone(), named("sin_y")?, tanh_x.clone()),
    ];
    if j > 0 {
        let boundary = || named("a_gamma_boundary");
        let indicator = term(model, "jump_indicator:0")?;
        let count = term(model, "jump_count:0")?;
        suite.push(ComparisonCase::new(boundary()?, x_t.clone(), boundary()?.shifted(1.0), x_t.clone()));
        suite.push(ComparisonCase::new(boundary()?, indicator.clone(), boundary()?, count.clone()));
        suite.push(ComparisonCase::new(named("zero")?, term(model, "zero")?, named("zero")?, count));
        suite.push(ComparisonCase::new(linear()?, term(model, "zero")?, linear()?, indicator));
    }
    Ok(suite)
}

fn cases_from_config(cfg: &ExperimentConfig, model: &LevyModel) -> Result<Vec<ComparisonCase>> {
    if cfg.generators.is_empty() && cfg.terminals.is_empty() {
        return default_comparison_suite(model);
    }
    let gens = cfg.build_generators(model)?;
    let terms = cfg.build_terminals(model)?;
    let pick = |n: usize, what: &str| -> Result<(usize, usize)> {
        match n {
            1 => Ok((0, 0)),
            2 => Ok((0, 1)),
            _ => Err(Error::InvalidArgument(format!("comparison needs one or two {what}, got {n}"))),
        }
    };
    let (g0, g1) = pick(gens.len(), "generators")?;
    let (t0, t1) = pick(terms.len(), "terminal functionals")?;
    Ok(vec![ComparisonCase::new(
        gens[g0].clone(),
        terms[t0].clone(),
        gens[g1].clone(),
        terms[t1].clone(),
    )])
}

/// Largest `ξ(leaf) − ξ'(leaf)` and the leaf index.
fn terminal_excess(tree: &ScenarioTree, xi: &TerminalFunctional, xi_prime: &TerminalFunctional) -> (f64, usize) {
    let a = tree.terminal_values(xi);
    let b = tree.terminal_values(xi_prime);
    a.iter()
        .zip(&b)
        .map(|(x, y)| x - y)
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |best, (k, d)| if d > best.0 { (d, k) } else { best })
}

struct Outcome {
    excess: f64,
    level: usize,
    node: usize,
    y0: f64,
    y0_prime: f64,
    identical: bool,
}

fn compare_on(tree: &ScenarioTree, c: &ComparisonCase, opts: &SolverOptions) -> Result<Outcome> {
    let s = tree.solve(&c.f, &c.xi, opts)?;
    let sp = tree.solve(&c.f_prime, &c.xi_prime, opts)?;
    let (excess, level, node) = s.max_excess_over(&sp)?;
    let identical = s.levels().iter().zip(sp.levels()).all(|(a, b)| a.y == b.y);
    Ok(Outcome {
        excess,
        level,
        node,
        y0: s.y0(),
        y0_prime: sp.y0(),
        identical,
    })
}

fn refinement_steps(cfg: &ExperimentConfig, model: &LevyModel) -> Vec<usize> {
    let base = cfg.model.steps;
    let requested = if cfg.refinements.is_empty() {
        vec![base, 2 * base]
    } else {
        cfg.refinements.clone()
    };
    let b = branching_factor(model);
    requested
        .into_iter()
        .filter(|&n| n >= 1 && (tree_node_count(b, n) <= cfg.solver.node_cap as u128 || n == base))
        .collect()
}

/// Node-wise comparison of tree solutions with a refinement sweep over `dt`.
///
/// Uses the configured generator and terminal pair, or
/// [`default_comparison_suite`] when neither is named.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Report> {
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid) = cfg.model.build()?;
    let cases = cases_from_config(cfg, &model)?;
    let steps = refinement_steps(cfg, &model);
    let tol = cfg.tolerances.comparison();
    let opts = cfg.solver_options();
    let sampler = cfg.sampler();
    let trees: Vec<ScenarioTree> = steps
        .iter()
        .map(|&n| cfg.build_tree(&model, &TimeGrid::new(grid.horizon(), n)?))
        .collect::<Result<_>>()?;
    report.notes.push(format!("refinement steps {steps:?}; tolerance {tol:e}"));

    for c in &cases {
        let mut case = Case::new(c.label.clone());
        case.precondition(condition_verdict(&check_dominated(&c.f, &c.f_prime, &sampler)));
        let (xi_excess, leaf) = terminal_excess(&trees[0], &c.xi, &c.xi_prime);
        case.precondition(Verdict::le("xi <= xi' at every leaf", xi_excess, 0.0).with_witness(json!({"leaf": leaf})));
        let ag = check_a_gamma(&c.f, &sampler);
        let ag_prime = check_a_gamma(&c.f_prime, &sampler);
        let best = if ag.passed || !ag_prime.passed { &ag } else { &ag_prime };
        case.precondition(condition_verdict(best));
        if !case.preconditions_met {
            report.cases.push(case);
            continue;
        }
        let mut violations = Vec::new();
        let mut sweep = Vec::new();
        for (tree, &n) in trees.iter().zip(&steps) {
            let o = compare_on(tree, c, &opts)?;
            case.verdict(
                Verdict::le(format!("max(Y - Y') at N={n}"), o.excess, tol)
                    .with_witness(json!({"level": o.level, "node": o.node})),
            );
            if n == steps[0] && c.f.name() == c.f_prime.name() && c.xi.name() == c.xi_prime.name() {
                case.verdict(Verdict::eq("identical data give identical Y", o.identical as u8 as f64, 1.0));
            }
            sweep.push(json!({
                "steps": n,
                "dt": grid.horizon() / n as f64,
                "max_excess": o.excess,
                "level": o.level,
                "node": o.node,
                "y0": o.y0,
                "y0_prime": o.y0_prime,
            }));
            violations.push(o.excess.max(0.0));
        }
        for k in 1..violations.len() {
            case.verdict(Verdict::le(
                format!("violation at N={} <= violation at N={}", steps[k], steps[k - 1]),
                violations[k],
                violations[k - 1] + tol,
            ));
        }
        case.record("sweep", sweep);
        report.cases.push(case);
    }
    Ok(report.finish(started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::Mark;

    fn model() -> (LevyModel, TimeGrid) {
        (
            LevyModel::new(0.1, 1.0, vec![Mark::new(0.5, 1.0)]).unwrap(),
            TimeGrid::new(1.0, 4).unwrap(),
        )
    }

    #[test]
    fn suite_is_large_enough_and_passes() {
        let (m, g) = model();
        let suite = default_comparison_suite(&m).unwrap();
        assert!(suite.len() >= 10);
        let cfg = ExperimentConfig::new("comparison", &m, &g);
        let r = run_comparison(&cfg).unwrap();
        assert!(r.all_passed(), "{}", r.summary());
    }

    #[test]
    fn constant_shift_of_boundary_generator_integrates_to_horizon() {
        let (m, g) = model();
        let mut cfg = ExperimentConfig::new("comparison", &m, &g);
        cfg.generators = vec![GeneratorRef::named("a_gamma_boundary"), GeneratorRef::named("a_gamma_boundary").with_shift(1.0)];
        cfg.terminals = vec!["x_T".into()];
        let r = run_comparison(&cfg).unwrap();
        assert!(r.all_passed(), "{}", r.summary());
        let s = &r.cases[0].records["sweep"][0];
        let gap = s["y0_prime"].as_f64().unwrap() - s["y0"].as_f64().unwrap();
        assert!((gap - 1.0).abs() < 1e-12, "{gap}");
    }

    #[test]
    fn reversed_terminal_order_is_unmet() {
        let (m, g) = model();
        let mut cfg = ExperimentConfig::new("comparison", &m, &g);
        cfg.generators = vec![GeneratorRef::named("zero")];
        cfg.terminals = vec!["pos_x".into(), "clip_x".into()];
        let r = run_comparison(&cfg).unwrap();
        assert!(!r.cases[0].preconditions_met);
        assert!(r.cases[0].verdicts.is_empty());
    }
}
