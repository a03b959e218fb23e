use serde::Serialize;

use super::{condition_verdict, leaf_mean, pathwise_integrals, Case, ExperimentConfig, Report, Verdict, PATH_QUAD_TOL};
use crate::error::Result;
use crate::estimates::quadrature::integrate;
use crate::estimates::{apriori_bound, stability_bound};
use crate::generators::{builtin_generators, check_growth, check_monotonicity, GeneratorSpec, PathContext};
use crate::lattice::ScenarioTree;
use crate::solution::{l2_distance, SolutionGrid};
use crate::terminal::TerminalFunctional;

/// Coefficient integrals of a generator measured along the tree paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budget {
    /// `C_K = max over paths of ∫_0^T (K₁ + K₂²) ds`.
    pub c_k: f64,
    /// `E I_F²` with `I_F = ∫_0^T F ds`.
    pub e_if2: f64,
    /// `∫_0^T α ds`.
    pub alpha_integral: f64,
    /// `max over paths of ∫_0^T β² ds`.
    pub beta2_integral: f64,
}

/// Integrates the declared coefficients over each step with the path state frozen
/// at the step's starting node.
pub fn measure_budget(tree: &ScenarioTree, g: &GeneratorSpec) -> Budget {
    let c = g.coeffs();
    let frozen = |s: f64, i: usize, k: usize, h: &dyn Fn(&PathContext) -> f64| {
        let node = tree.context(i, k);
        h(&PathContext::new(s, node.x, node.w, node.counts))
    };
    let ck = pathwise_integrals(tree, |s, i, k| {
        frozen(s, i, k, &|ctx| (c.k1)(ctx) + (c.k2)(ctx).powi(2))
    });
    let i_f = pathwise_integrals(tree, |s, i, k| frozen(s, i, k, &|ctx| (c.f)(ctx)));
    let b2 = pathwise_integrals(tree, |s, i, k| frozen(s, i, k, &|ctx| (c.beta)(ctx).powi(2)));
    let grid = tree.grid();
    let alpha_integral = (0..grid.steps())
        .map(|i| integrate(|s| (c.alpha)(s), grid.time(i), grid.time(i + 1), PATH_QUAD_TOL).value)
        .sum();
    let i_f2: Vec<f64> = i_f.iter().map(|v| v * v).collect();
    Budget {
        c_k: ck.iter().copied().fold(0.0, f64::max),
        e_if2: leaf_mean(tree, &i_f2),
        alpha_integral,
        beta2_integral: b2.iter().copied().fold(0.0, f64::max),
    }
}

fn e_xi2(tree: &ScenarioTree, xi: &TerminalFunctional) -> f64 {
    let v: Vec<f64> = tree.terminal_values(xi).iter().map(|x| x * x).collect();
    leaf_mean(tree, &v)
}

fn condition_preconditions(case: &mut Case, g: &GeneratorSpec, cfg: &ExperimentConfig) {
    let sampler = cfg.sampler();
    for report in [check_growth(g, &sampler), check_monotonicity(g, &sampler)] {
        case.precondition(condition_verdict(&report));
    }
}

/// Checks the a-priori bounds for every generator/terminal pair.
///
/// Uses the configured generators and terminals, or the built-in catalog and every
/// terminal functional when none are named.
pub fn run_apriori_check(cfg: &ExperimentConfig) -> Result<Report> {
    let (mut report, started) = Report::start(&cfg.experiment);
    let (model, grid) = cfg.model.build()?;
    let tree = cfg.build_tree(&model, &grid)?;
    let opts = cfg.solver_options();
    let generators = if cfg.generators.is_empty() {
        builtin_generators(&model)
    } else {
        cfg.build_generators(&model)?
    };
    let terminals = if cfg.terminals.is_empty() {
        TerminalFunctional::catalog_names(model.num_marks())
            .iter()
            .map(|n| TerminalFunctional::by_name(n, model.num_marks()))
            .collect::<Result<Vec<_>>>()?
    } else {
        cfg.build_terminals(&model)?
    };

    for g in &generators {
        let budget = measure_budget(&tree, g);
        for xi in &terminals {
            let mut case = Case::new(format!("{} / {}", g.name(), xi.name()));
            condition_preconditions(&mut case, g, cfg);
            let ex2 = e_xi2(&tree, xi);
            let bound = apriori_bound(budget.c_k, ex2, budget.e_if2)?;
            case.record("budget", budget);
            case.record("e_xi2", ex2);
            case.record("bound", bound);
            if case.preconditions_met {
                let sol = tree.solve(g, xi, &opts)?;
                let sup_y = sol.e_sup_y2();
                let zu = sol.z_norm2() + sol.u_norm2();
                case.record("y0", sol.y0());
                case.verdict(Verdict::le("E sup|Y|^2", sup_y, bound.sup_y_bound));
                case.verdict(Verdict::le("E int |Z|^2 + |U|^2", zu, bound.zu_bound));
            }
            report.cases.push(case);
        }
    }
    report.notes.push(
        "C_K and beta integrals are maxima over tree paths of per-step quadratures with the path state frozen at each node"
            .into(),
    );
    report.cases.extend(stability_cases(cfg, &tree, &generators)?);
    Ok(report.finish(started))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCheck {
    /// `E|Δξ|²`.
    pub terminal_gap: f64,
    /// `2 E Σ dt |ΔY_i| |f(t_i, Y_i, Z_i, U_i) − f'(t_i, Y_i, Z_i, U_i)|`.
    pub generator_gap: f64,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    /// `E Σ dt |ΔY|² + ‖ΔZ‖² + ‖ΔU‖²`.
    pub lhs: f64,
    /// `max_i E|ΔY_i|² + ‖ΔZ‖² + ‖ΔU‖²`.
    pub lhs_sup: f64,
    pub bound: f64,
}

/// Measures both sides of the stability estimate for `(ξ, f)` against `(ξ', f')`;
/// `a`, `b` and `ρ` are taken from `f'`.
pub fn stability_check(
    tree: &ScenarioTree,
    first: (&GeneratorSpec, &TerminalFunctional, &SolutionGrid),
    second: (&GeneratorSpec, &TerminalFunctional, &SolutionGrid),
) -> Result<StabilityCheck> {
    let (f, xi, s1) = first;
    let (fp, xip, s2) = second;
    let a1 = tree.terminal_values(xi);
    let a2 = tree.terminal_values(xip);
    let gap: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| (x - y).powi(2)).collect();
    let terminal_gap = leaf_mean(tree, &gap);
    let dt = tree.grid().dt();
    let mut generator_gap = 0.0;
    let mut sup_dy = 0.0f64;
    for i in 0..=tree.steps() {
        let (l1, l2) = (s1.level(i), s2.level(i));
        let mut e_dy2 = 0.0;
        for k in 0..l1.len() {
            let dy = l1.y[k] - l2.y[k];
            e_dy2 += l1.weights[k] * dy * dy;
            if i < tree.steps() {
                let ctx = tree.context(i, k);
                let u = s1.u_at(i, k);
                let df = f.eval(&ctx, l1.y[k], l1.z[k], u) - fp.eval(&ctx, l1.y[k], l1.z[k], u);
                generator_gap += 2.0 * dt * l1.weights[k] * dy.abs() * df.abs();
            }
        }
        sup_dy = sup_dy.max(e_dy2);
    }
    let budget = measure_budget(tree, fp);
    let d = l2_distance(s1, s2)?;
    let delta = terminal_gap + generator_gap;
    let bound = stability_bound(budget.alpha_integral, budget.beta2_integral, delta, &fp.coeffs().rho)?;
    Ok(StabilityCheck {
        terminal_gap,
        generator_gap,
        delta,
        a: budget.alpha_integral,
        b: budget.beta2_integral,
        lhs: d.total(),
        lhs_sup: sup_dy + d.dz + d.du,
        bound,
    })
}

fn stability_cases(cfg: &ExperimentConfig, tree: &ScenarioTree, generators: &[GeneratorSpec]) -> Result<Vec<Case>> {
    let j = tree.num_marks();
    let opts = cfg.solver_options();
    let x_t = TerminalFunctional::by_name("x_T", j)?;
    let tanh_x = TerminalFunctional::by_name("tanh_x", j)?;
    let mut pairs: Vec<(GeneratorSpec, TerminalFunctional, GeneratorSpec, TerminalFunctional)> = Vec::new();
    for g in generators {
        pairs.push((g.clone(), x_t.clone(), g.clone(), x_t.shifted(0.1)));
        pairs.push((g.clone(), tanh_x.clone(), g.shifted(0.05), tanh_x.scaled(1.1)));
    }
    let mut cases = Vec::new();
    for (f, xi, fp, xip) in pairs {
        let mut case = Case::new(format!("stability {} / {} vs {} / {}", f.name(), xi.name(), fp.name(), xip.name()));
        condition_preconditions(&mut case, &f, cfg);
        condition_preconditions(&mut case, &fp, cfg);
        if case.preconditions_met {
            let s1 = tree.solve(&f, &xi, &opts)?;
            let s2 = tree.solve(&fp, &xip, &opts)?;
            let st = stability_check(tree, (&f, &xi, &s1), (&fp, &xip, &s2))?;
            case.record("stability", st);
            case.verdict(Verdict::le("|dY|^2 + |dZ|^2 + |dU|^2 <= h(a, b, delta)", st.lhs, st.bound));
        }
        cases.push(case);
    }
    Ok(cases)
}
