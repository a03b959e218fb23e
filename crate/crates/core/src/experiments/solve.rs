use super::{Case, ExperimentConfig, Report};
use crate::error::{Error, Result};
use crate::levy_model::{simulate_paths_with, PathBundle};
use crate::mc_solver::{solve_mc, McSolution};
use crate::solution::SolutionGrid;

fn single_pair(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.generators.len() != 1 || cfg.terminals.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "solving needs exactly one generator and one terminal functional, got {} and {}",
            cfg.generators.len(),
            cfg.terminals.len()
        )));
    }
    Ok(())
}

/// Simulates `cfg.solver.paths` paths under `cfg.solver.law`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(PathBundle, Report)> {
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid) = cfg.model.build()?;
    let bundle = simulate_paths_with(&model, &grid, cfg.solver.paths, cfg.seed, cfg.solver.law)?;
    let mut case = Case::new("simulate");
    let terminal: Vec<f64> = (0..bundle.count()).map(|p| bundle.terminal_state(p)).collect();
    let mean = terminal.iter().sum::<f64>() / terminal.len() as f64;
    case.record("paths", bundle.count());
    case.record("mean_x_T", mean);
    case.record("model_mean_x_T", model.mean(grid.horizon()));
    report.cases.push(case);
    Ok((bundle, report.finish(started)))
}

/// Exact tree solution of the configured generator and terminal functional.
pub fn solve_lattice(cfg: &ExperimentConfig) -> Result<(SolutionGrid, Report)> {
    single_pair(cfg)?;
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid) = cfg.model.build()?;
    let g = &cfg.build_generators(&model)?[0];
    let xi = &cfg.build_terminals(&model)?[0];
    let tree = cfg.build_tree(&model, &grid)?;
    let sol = tree.solve(g, xi, &cfg.solver_options())?;
    let mut case = Case::new(format!("{} / {}", g.name(), xi.name()));
    case.record("nodes", tree.num_nodes());
    case.record("y0", sol.y0());
    case.record("e_sup_y2", sol.e_sup_y2());
    case.record("z_norm2", sol.z_norm2());
    case.record("u_norm2", sol.u_norm2());
    case.record("martingale", tree.martingale_check(&sol)?);
    report.cases.push(case);
    Ok((sol, report.finish(started)))
}

/// Monte-Carlo regression solution of the configured generator and terminal
/// functional.
pub fn solve_monte_carlo(cfg: &ExperimentConfig) -> Result<(McSolution, Report)> {
    single_pair(cfg)?;
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid) = cfg.model.build()?;
    let g = &cfg.build_generators(&model)?[0];
    let xi = &cfg.build_terminals(&model)?[0];
    let mc_cfg = cfg.solver.mc_config(cfg.solver.paths, cfg.seed, cfg.solver_options());
    let sol = solve_mc(&model, &grid, g, xi, &mc_cfg)?;
    let mut case = Case::new(format!("{} / {}", g.name(), xi.name()));
    case.record("paths", cfg.solver.paths);
    case.record("y0", sol.y0);
    case.record("y0_se", sol.y0_se);
    case.record("degree_reductions", &sol.reductions);
    report.cases.push(case);
    Ok((sol, report.finish(started)))
}
