use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{condition_verdict, Case, ExperimentConfig, Report, Verdict};
use crate::error::Result;
use crate::generators::{check_a_gamma, generator_from_ref, GeneratorRef, GeneratorSpec, CHECK_SLACK};
use crate::lattice::{build_tree, ScenarioTree, SolverOptions};
use crate::levy_model::{LevyModel, Mark, ModelConfig, TimeGrid};
use crate::terminal::TerminalFunctional;

/// A one-mark, σ = 0 instance where `f = f'` violates (Aγ), `ξ ≤ ξ'` and yet
/// `Y > Y'` somewhere on the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleInstance {
    pub lambda: f64,
    pub mark: f64,
    pub horizon: f64,
    pub steps: usize,
    pub xi: String,
    pub xi_prime: String,
    /// `max(Y − Y')` over all nodes.
    pub margin: f64,
    pub level: usize,
    pub node: usize,
}

impl CounterexampleInstance {
    pub fn model(&self) -> Result<(LevyModel, TimeGrid)> {
        Ok((
            LevyModel::new(0.0, 0.0, vec![Mark::new(self.mark, self.lambda)])?,
            TimeGrid::new(self.horizon, self.steps)?,
        ))
    }
}

/// Parameter grid scanned by [`search_counterexample`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub lambdas: Vec<f64>,
    pub steps: Vec<usize>,
    pub horizon: f64,
    pub mark: f64,
    pub terminals: Vec<String>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 1.0, 2.0],
            steps: vec![1, 2, 3, 4],
            horizon: 1.0,
            mark: 1.0,
            terminals: ["zero", "one", "jump_indicator:0", "jump_count:0"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

fn largest_excess(
    tree: &ScenarioTree,
    g: &GeneratorSpec,
    xi: &TerminalFunctional,
    xi_prime: &TerminalFunctional,
    opts: &SolverOptions,
) -> Result<(f64, usize, usize)> {
    let s = tree.solve(g, xi, opts)?;
    let sp = tree.solve(g, xi_prime, opts)?;
    s.max_excess_over(&sp)
}

fn ordered(tree: &ScenarioTree, xi: &TerminalFunctional, xi_prime: &TerminalFunctional) -> bool {
    let a = tree.terminal_values(xi);
    let b = tree.terminal_values(xi_prime);
    a.iter().zip(&b).all(|(x, y)| x <= y)
}

/// Exhaustive scan over the grid with `f = f' = −2 Σ λ_j u_j`; returns the instance
/// with the largest violation margin, if any is positive. Ties keep the first hit.
pub fn search_counterexample(grid: &SearchGrid) -> Result<Option<CounterexampleInstance>> {
    let opts = SolverOptions::default();
    let mut best: Option<CounterexampleInstance> = None;
    for &lambda in &grid.lambdas {
        for &steps in &grid.steps {
            let model = LevyModel::new(0.0, 0.0, vec![Mark::new(grid.mark, lambda)])?;
            let tgrid = TimeGrid::new(grid.horizon, steps)?;
            if model.check_tree_compatible(&tgrid).is_err() {
                continue;
            }
            let tree = build_tree(&model, &tgrid)?;
            let g = generator_from_ref(&GeneratorRef::named("a_gamma_violating"), &model)?;
            for a in &grid.terminals {
                for b in &grid.terminals {
                    let xi = TerminalFunctional::by_name(a, 1)?;
                    let xi_prime = TerminalFunctional::by_name(b, 1)?;
                    if a == b || !ordered(&tree, &xi, &xi_prime) {
                        continue;
                    }
                    let (margin, level, node) = largest_excess(&tree, &g, &xi, &xi_prime, &opts)?;
                    if margin > 0.0 && best.as_ref().is_none_or(|c| margin > c.margin) {
                        best = Some(CounterexampleInstance {
                            lambda,
                            mark: grid.mark,
                            horizon: grid.horizon,
                            steps,
                            xi: a.clone(),
                            xi_prime: b.clone(),
                            margin,
                            level,
                            node,
                        });
                    }
                }
            }
        }
    }
    Ok(best)
}

/// The shipped instance, frozen from [`search_counterexample`] on the default grid.
pub fn default_counterexample() -> CounterexampleInstance {
    CounterexampleInstance {
        lambda: 2.0,
        mark: 1.0,
        horizon: 1.0,
        steps: 4,
        xi: "zero".into(),
        xi_prime: "jump_indicator:0".into(),
        margin: 4.0625,
        level: 0,
        node: 0,
    }
}

/// Searches the tree for a node with `Y > Y'` under a generator violating (Aγ),
/// and re-runs the instance with the boundary generator and with `ξ' = ξ`.
///
/// With no terminal pair configured, the model, grid and terminals of
/// [`default_counterexample`] replace those of the config.
pub fn run_counterexample(cfg: &ExperimentConfig) -> Result<Report> {
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid, xi_name, xi_prime_name) = if cfg.terminals.len() == 2 {
        let (m, g) = cfg.model.build()?;
        (m, g, cfg.terminals[0].clone(), cfg.terminals[1].clone())
    } else {
        let inst = default_counterexample();
        let (m, g) = inst.model()?;
        report.notes.push(format!(
            "using the shipped instance: {}",
            serde_json::to_string(&ModelConfig::from_parts(&m, &g))?
        ));
        (m, g, inst.xi.as_str().into(), inst.xi_prime.as_str().into())
    };
    let j = model.num_marks();
    let xi = xi_name.build(j)?;
    let xi_prime = xi_prime_name.build(j)?;
    let f = match cfg.generators.first() {
        Some(r) => generator_from_ref(r, &model)?,
        None => generator_from_ref(&GeneratorRef::named("a_gamma_violating"), &model)?,
    };
    let tree = cfg.build_tree(&model, &grid)?;
    let opts = cfg.solver_options();
    let sampler = cfg.sampler();
    let margin_floor = cfg.tolerances.counterexample_factor * cfg.tolerances.fixed_point;
    let tol = cfg.tolerances.comparison();
    let xi_ordered = ordered(&tree, &xi, &xi_prime);

    let mut main = Case::new(format!("{} / {} vs {}", f.name(), xi.name(), xi_prime.name()));
    let ag = check_a_gamma(&f, &sampler);
    main.precondition(Verdict::gt("generator violates a_gamma (max excess)", ag.max_excess, CHECK_SLACK));
    main.precondition(Verdict::eq("xi <= xi' at every leaf", xi_ordered as u8 as f64, 1.0));
    let (margin, level, node) = largest_excess(&tree, &f, &xi, &xi_prime, &opts)?;
    main.record("margin", margin);
    main.record("witness", json!({"level": level, "node": node, "t": grid.time(level), "counts": tree.counts(level, node)}));
    main.verdict(Verdict::gt("max(Y - Y')", margin, margin_floor).with_detail(json!({"level": level, "node": node})));
    if margin <= 0.0 {
        report.notes.push(format!("no violating node found at dt = {}", grid.dt()));
    }
    report.cases.push(main);

    let boundary = generator_from_ref(&GeneratorRef::named("a_gamma_boundary"), &model)?;
    let mut bcase = Case::new(format!("{} / {} vs {}", boundary.name(), xi.name(), xi_prime.name()));
    bcase.precondition(condition_verdict(&check_a_gamma(&boundary, &sampler)));
    bcase.precondition(Verdict::eq("xi <= xi' at every leaf", xi_ordered as u8 as f64, 1.0));
    let (b_margin, b_level, b_node) = largest_excess(&tree, &boundary, &xi, &xi_prime, &opts)?;
    bcase.verdict(Verdict::le("max(Y - Y')", b_margin, tol).with_witness(json!({"level": b_level, "node": b_node})));
    report.cases.push(bcase);

    let mut same = Case::new(format!("{} / {} vs {}", f.name(), xi.name(), xi.name()));
    let (s_margin, s_level, s_node) = largest_excess(&tree, &f, &xi, &xi, &opts)?;
    same.verdict(Verdict::le("max(Y - Y')", s_margin, 0.0).with_witness(json!({"level": s_level, "node": s_node})));
    report.cases.push(same);

    Ok(report.finish(started))
}
