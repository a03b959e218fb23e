use serde::Serialize;
use serde_json::json;

use super::{Case, ExperimentConfig, Report, SolverKind, Verdict};
use crate::error::Result;
use crate::generators::{generator_from_ref, GeneratorRef, GeneratorSpec};
use crate::lattice::{branching_factor, tree_node_count};
use crate::levy_model::{LevyModel, TimeGrid};
use crate::mc_solver::solve_mc;
use crate::terminal::{TerminalFunctional, TerminalRef};

const DEFAULT_STEPS: &[usize] = &[25, 50, 100, 200];
/// Expected order of the implicit scheme and the accepted deviation.
const EXPECTED_ORDER: f64 = 1.0;
const ORDER_TOLERANCE: f64 = 0.3;
const SE_SLOPE: f64 = -0.5;
const SE_SLOPE_TOLERANCE: f64 = 0.1;
/// Relative slack added to the standard-error band so deterministic instances,
/// whose bootstrap error is zero, compare up to rounding.
const MC_ROUNDING_SLACK: f64 = 1e-10;

/// One Monte-Carlo run against the tree value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McTreeGap {
    pub paths: usize,
    pub tree_y0: f64,
    pub mc_y0: f64,
    pub se: f64,
    pub gap: f64,
}

/// Least-squares slope of `ln y` against `ln x` over pairs with `y > 0`.
fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `ξ e^{kT}` when `f = k y` and `ξ` is a constant.
fn closed_form_limit(g: &GeneratorRef, xi: &TerminalRef, horizon: f64) -> Option<f64> {
    if g.name != "linear_y" || g.shift.is_some_and(|s| s != 0.0) {
        return None;
    }
    let k = g.k.unwrap_or(1.0);
    let (base, scale, shift) = match xi {
        TerminalRef::Name(n) => (n.as_str(), 1.0, 0.0),
        TerminalRef::Spec { name, scale, shift } => (name.as_str(), scale.unwrap_or(1.0), shift.unwrap_or(0.0)),
    };
    let value = match base {
        "one" => scale + shift,
        "zero" => shift,
        _ => return None,
    };
    Some(value * (k * horizon).exp())
}

/// Step-refinement study on the tree and, with the Monte-Carlo solver selected,
/// the gap between Monte-Carlo and tree `Y_0`.
///
/// Defaults: `f = y`, `ξ = 1`, `N ∈ {25, 50, 100, 200}`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Report> {
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid) = cfg.model.build()?;
    let grefs = if cfg.generators.is_empty() {
        vec![GeneratorRef::named("linear_y")]
    } else {
        cfg.generators.clone()
    };
    let trefs: Vec<TerminalRef> = if cfg.terminals.is_empty() {
        vec!["one".into()]
    } else {
        cfg.terminals.clone()
    };
    let steps = if cfg.refinements.is_empty() {
        DEFAULT_STEPS.to_vec()
    } else {
        cfg.refinements.clone()
    };
    let opts = cfg.solver_options();
    let b = branching_factor(&model);

    for gref in &grefs {
        let g = generator_from_ref(gref, &model)?;
        for tref in &trefs {
            let xi = tref.build(model.num_marks())?;
            let mut case = Case::new(format!("{} / {}", g.name(), xi.name()));
            for &n in &steps {
                let nodes = tree_node_count(b, n);
                case.precondition(Verdict::le(
                    format!("tree nodes at N={n}"),
                    nodes as f64,
                    cfg.solver.node_cap as f64,
                ));
                let compatible = model.check_tree_compatible(&TimeGrid::new(grid.horizon(), n)?).is_ok();
                case.precondition(Verdict::eq(format!("lambda dt < 1 at N={n}"), compatible as u8 as f64, 1.0));
            }
            if case.preconditions_met {
                refinement(&mut case, cfg, &model, &g, &xi, &steps, closed_form_limit(gref, tref, grid.horizon()))?;
            }
            if cfg.solver.kind == SolverKind::Mc {
                mc_versus_tree(&mut case, cfg, &model, &grid, &g, &xi)?;
            }
            report.cases.push(case);
        }
    }
    report.notes.push(format!("fixed-point tolerance {:e}", opts.tol));
    Ok(report.finish(started))
}

fn refinement(
    case: &mut Case,
    cfg: &ExperimentConfig,
    model: &LevyModel,
    g: &GeneratorSpec,
    xi: &TerminalFunctional,
    steps: &[usize],
    limit: Option<f64>,
) -> Result<()> {
    let horizon = cfg.model.horizon;
    let opts = cfg.solver_options();
    let mut y0 = Vec::with_capacity(steps.len());
    for &n in steps {
        let tree = cfg.build_tree(model, &TimeGrid::new(horizon, n)?)?;
        y0.push(tree.solve(g, xi, &opts)?.y0());
    }
    let mut gaps = Vec::new();
    for (a, &n) in steps.iter().enumerate() {
        if let Some(b) = steps.iter().position(|&m| m == 2 * n) {
            gaps.push((horizon / n as f64, (y0[a] - y0[b]).abs()));
        }
    }
    case.record("y0", steps.iter().zip(&y0).map(|(n, y)| json!({"steps": n, "y0": y})).collect::<Vec<_>>());
    case.record("successive_gaps", gaps.iter().map(|(dt, d)| json!({"dt": dt, "gap": d})).collect::<Vec<_>>());
    let gap_order = log_log_slope(&gaps);
    case.record("gap_order", gap_order);
    if let Some(limit) = limit {
        let errors: Vec<(f64, f64)> = steps
            .iter()
            .zip(&y0)
            .map(|(&n, y)| (horizon / n as f64, (y - limit).abs()))
            .collect();
        case.record("limit", limit);
        case.record("errors", errors.iter().map(|(dt, e)| json!({"dt": dt, "error": e})).collect::<Vec<_>>());
        for w in errors.windows(2) {
            if w[1].0 < w[0].0 {
                case.verdict(Verdict::le(format!("error at dt={} <= error at dt={}", w[1].0, w[0].0), w[1].1, w[0].1));
            }
        }
        let order = log_log_slope(&errors).unwrap_or(f64::NAN);
        case.record("order", order);
        case.verdict(Verdict::le("|order - 1|", (order - EXPECTED_ORDER).abs(), ORDER_TOLERANCE));
    } else if gaps.iter().all(|(_, d)| *d == 0.0) {
        case.record("note", "Y_0 does not depend on the step count");
    }
    Ok(())
}

fn mc_versus_tree(
    case: &mut Case,
    cfg: &ExperimentConfig,
    model: &LevyModel,
    grid: &TimeGrid,
    g: &GeneratorSpec,
    xi: &TerminalFunctional,
) -> Result<()> {
    let opts = cfg.solver_options();
    let tree = cfg.build_tree(model, grid)?;
    let tree_y0 = tree.solve(g, xi, &opts)?.y0();
    let mut counts = cfg.solver.path_counts.clone();
    if !counts.contains(&cfg.solver.paths) {
        counts.push(cfg.solver.paths);
    }
    counts.sort_unstable();
    let k = cfg.tolerances.mc_standard_errors;
    let mut runs = Vec::with_capacity(counts.len());
    for &paths in &counts {
        let mc = solve_mc(model, grid, g, xi, &cfg.solver.mc_config(paths, cfg.seed, opts))?;
        let se = mc.y0_se.unwrap_or(f64::NAN);
        runs.push(McTreeGap {
            paths,
            tree_y0,
            mc_y0: mc.y0,
            se,
            gap: mc.y0 - tree_y0,
        });
        if !mc.reductions.is_empty() {
            case.record(&format!("degree_reductions_{paths}"), &mc.reductions);
        }
    }
    let main = runs.iter().find(|r| r.paths == cfg.solver.paths).expect("main path count was added");
    let slack = MC_ROUNDING_SLACK * tree_y0.abs().max(1.0);
    case.verdict(
        Verdict::le(format!("|MC - tree| at {} paths", main.paths), main.gap.abs(), k * main.se + slack)
            .with_detail(main),
    );
    if runs.len() >= 2 {
        let pts: Vec<(f64, f64)> = runs.iter().map(|r| (r.paths as f64, r.se)).collect();
        if runs.iter().all(|r| r.se > 0.0) {
            let slope = log_log_slope(&pts).unwrap_or(f64::NAN);
            case.record("se_slope", slope);
            case.verdict(Verdict::le("|SE slope + 0.5|", (slope - SE_SLOPE).abs(), SE_SLOPE_TOLERANCE));
        } else {
            case.record("se_slope", "standard error vanishes: deterministic instance");
        }
    }
    case.record("mc_runs", runs);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::Mark;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64, 3.0 * (k as f64).powf(-0.5))).collect();
        assert!((log_log_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert!(log_log_slope(&[(1.0, 0.0), (2.0, 0.0)]).is_none());
    }

    #[test]
    fn linear_y_closed_form_order() {
        let m = LevyModel::new(0.0, 0.0, vec![]).unwrap();
        let g = TimeGrid::new(1.0, 25).unwrap();
        let cfg = ExperimentConfig::new("convergence", &m, &g);
        let r = run_convergence(&cfg).unwrap();
        assert!(r.all_passed(), "{}", r.summary());
        let order = r.cases[0].records["order"].as_f64().unwrap();
        assert!((order - 1.0).abs() < 0.3);
    }

    #[test]
    fn zero_generator_has_no_gaps() {
        let m = LevyModel::new(0.0, 1.0, vec![Mark::new(0.5, 1.0)]).unwrap();
        let g = TimeGrid::new(1.0, 2).unwrap();
        let mut cfg = ExperimentConfig::new("convergence", &m, &g);
        cfg.generators = vec![GeneratorRef::named("zero")];
        cfg.terminals = vec!["x_T".into()];
        cfg.refinements = vec![2, 4, 8];
        let r = run_convergence(&cfg).unwrap();
        let gaps = &r.cases[0].records["successive_gaps"];
        for v in gaps.as_array().unwrap() {
            assert!(v["gap"].as_f64().unwrap() < 1e-14);
        }
    }

    #[test]
    fn infeasible_refinement_is_unmet() {
        let m = LevyModel::new(0.0, 1.0, vec![Mark::new(0.5, 1.0)]).unwrap();
        let g = TimeGrid::new(1.0, 2).unwrap();
        let mut cfg = ExperimentConfig::new("convergence", &m, &g);
        cfg.refinements = vec![25];
        let r = run_convergence(&cfg).unwrap();
        assert!(!r.cases[0].preconditions_met);
    }
}
