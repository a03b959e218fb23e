use super::{Case, ExperimentConfig, Report, Verdict};
use crate::error::{Error, Result};
use crate::generators::{builtin_generators, GeneratorSpec};
use crate::levy_model::retained_at;
use crate::solution::l2_distance;
use crate::terminal::TerminalFunctional;

const DEFAULT_TERMINALS: &[&str] = &["x_T", "tanh_x", "pos_x"];

/// Distances between truncated and full tree solutions across increasing levels.
///
/// With no generators named, sweeps the built-in catalog against a few terminal
/// functionals.
pub fn run_truncation_study(cfg: &ExperimentConfig) -> Result<Report> {
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid) = cfg.model.build()?;
    let levels = if cfg.truncation_levels.is_empty() {
        vec![1, 4, 100]
    } else {
        cfg.truncation_levels.clone()
    };
    if levels.first() == Some(&0) {
        return Err(Error::InvalidArgument("truncation levels must be >= 1".into()));
    }
    let tree = cfg.build_tree(&model, &grid)?;
    let opts = cfg.solver_options();
    let generators: Vec<GeneratorSpec> = if cfg.generators.is_empty() {
        builtin_generators(&model)
    } else {
        cfg.build_generators(&model)?
    };
    let terminals: Vec<TerminalFunctional> = if cfg.terminals.is_empty() {
        DEFAULT_TERMINALS
            .iter()
            .map(|n| TerminalFunctional::by_name(n, model.num_marks()))
            .collect::<Result<_>>()?
    } else {
        cfg.build_terminals(&model)?
    };

    let n_min = levels[0];
    let removed_at_min = model.marks().iter().filter(|m| !retained_at(m.x, n_min)).count();
    let n_max = *levels.last().expect("at least one level");
    let kept_at_max = model.marks().iter().filter(|m| retained_at(m.x, n_max)).count();
    let removed: Vec<usize> = levels
        .iter()
        .map(|&n| model.marks().iter().filter(|m| !retained_at(m.x, n)).count())
        .collect();
    let tol = cfg.tolerances.truncation;

    for g in &generators {
        for xi in &terminals {
            let mut case = Case::new(format!("{} / {}", g.name(), xi.name()));
            case.precondition(Verdict::gt("marks removed at the smallest level", removed_at_min as f64, 0.0));
            case.precondition(Verdict::gt("marks kept at the largest level", kept_at_max as f64, 0.0));
            let full = tree.solve(g, xi, &opts)?;
            let mut dists = Vec::with_capacity(levels.len());
            for &n in &levels {
                let trunc = tree.solve_truncated(g, xi, n, &opts)?;
                dists.push(l2_distance(&trunc, &full)?);
            }
            let rows: Vec<_> = levels
                .iter()
                .zip(&removed)
                .zip(&dists)
                .map(|((n, r), d)| {
                    serde_json::json!({"n": n, "marks_removed": r, "dY": d.dy, "dZ": d.dz, "dU": d.du})
                })
                .collect();
            case.record("distances", rows);
            for k in 1..levels.len() {
                let (prev, next) = (&dists[k - 1], &dists[k]);
                for (label, a, b) in [("dY", prev.dy, next.dy), ("dZ", prev.dz, next.dz), ("dU", prev.du, next.du)] {
                    case.verdict(Verdict::le(
                        format!("{label}(n={}) <= {label}(n={})", levels[k], levels[k - 1]),
                        b,
                        a + tol,
                    ));
                }
            }
            let last = dists.last().expect("at least one level");
            case.verdict(Verdict::le(format!("total distance at n={n_max}"), last.total(), tol));
            if *removed.last().expect("at least one level") == 0 {
                case.verdict(Verdict::eq(format!("exact zero at n={n_max}"), last.total(), 0.0));
            }
            report.cases.push(case);
        }
    }
    Ok(report.finish(started))
}
