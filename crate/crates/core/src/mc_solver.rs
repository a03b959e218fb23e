//! Least-squares Monte-Carlo backward solver.
//!
//! Conditional expectations `Ê_i[·]` are projections on polynomials of the
//! standardized state `X_{t_i}` (and optionally the jump counts) fitted across the
//! simulated paths:
//!
//! ```text
//! Z_i   = Ê_i[Y_{i+1} ΔW_i] / dt
//! U_i,j = Ê_i[Y_{i+1} ΔÑ_{i,j}] / Var(ΔÑ_{i,j})
//! Y_i   = Ê_i[Y_{i+1}] + dt f(t_i, Y_i, Z_i, U_i)      (implicit, per path)
//! Y_i   = Ê_i[Y_{i+1}] + dt f(t_i, Ê_i[Y_{i+1}], Z_i, U_i)   (explicit)
//! ```
//!
//! `Var(ΔÑ) = λdt(1 − λdt)` under the lattice increment law and `λdt` under the
//! Poisson law.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, PathContext};
use crate::lattice::SolverOptions;
use crate::levy_model::{path_rng, simulate_paths_with, IncrementLaw, LevyModel, PathBundle, TimeGrid};
use crate::solution::{Indexing, Level, SolutionGrid};
use crate::terminal::TerminalFunctional;

pub use crate::solution::{l2_distance, L2Distance};

/// Relative eigenvalue floor of the normalized Gram matrix below which the design is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;
/// Minimum number of paths per regression coefficient.
pub const PATHS_PER_COEFFICIENT: usize = 10;
/// Stream offset separating bootstrap resampling from path simulation.
const BOOTSTRAP_STREAM: u64 = 0xB007_5EED_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// Monomials of the standardized state.
    #[default]
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionBasis {
    #[serde(default)]
    pub family: BasisFamily,
    pub degree: usize,
    /// Adds the running jump count of each mark as a linear feature; needed for
    /// terminal values that depend on counts rather than on `X`.
    #[serde(default)]
    pub count_features: bool,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self {
            family: BasisFamily::Polynomial,
            degree: 3,
            count_features: false,
        }
    }
}

impl RegressionBasis {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            degree,
            ..Self::default()
        }
    }

    /// Number of coefficients, including the intercept.
    pub fn dimension(&self, num_marks: usize) -> usize {
        1 + self.degree + if self.count_features { num_marks } else { 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McScheme {
    #[default]
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    #[serde(default)]
    pub basis: RegressionBasis,
    pub seed: u64,
    #[serde(default)]
    pub law: IncrementLaw,
    #[serde(default)]
    pub scheme: McScheme,
    /// Bootstrap replicates for the standard error of `Y_0`; 0 disables it.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Keep the full path-indexed solution (memory `O(paths · steps)`).
    #[serde(default = "default_true")]
    pub keep_grid: bool,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_bootstrap() -> usize {
    40
}

fn default_true() -> bool {
    true
}

impl McConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            basis: RegressionBasis::default(),
            seed,
            law: IncrementLaw::default(),
            scheme: McScheme::default(),
            bootstrap: default_bootstrap(),
            keep_grid: true,
            solver: SolverOptions::default(),
        }
    }
}

/// Per-step summary across paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStat {
    pub step: usize,
    pub y_mean: f64,
    /// Standard error of `y_mean` across paths.
    pub y_se: f64,
    pub z_mean: f64,
    pub u_mean: Vec<f64>,
}

/// A regression degree lowered because the design matrix was rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeReduction {
    pub step: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSolution {
    pub y0: f64,
    /// Bootstrap standard error of `y0` (`None` without bootstrap).
    pub y0_se: Option<f64>,
    pub bootstrap_y0: Vec<f64>,
    pub steps: Vec<StepStat>,
    pub reductions: Vec<DegreeReduction>,
    #[serde(skip)]
    pub grid: Option<SolutionGrid>,
}

impl McSolution {
    /// CSV with columns `step, Y_mean, Y_se, Z_mean, U_1_mean..U_J_mean`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let j = self.steps.first().map_or(0, |s| s.u_mean.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string(), "Y_mean".into(), "Y_se".into(), "Z_mean".into()];
        header.extend((1..=j).map(|k| format!("U_{k}_mean")));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut rec = vec![s.step.to_string(), s.y_mean.to_string(), s.y_se.to_string(), s.z_mean.to_string()];
            rec.extend(s.u_mean.iter().map(|u| u.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `cfg.paths` paths and runs the backward regression, plus
/// `cfg.bootstrap` replicates on resampled paths for the standard error of `Y_0`.
pub fn solve_mc(
    model: &LevyModel,
    grid: &TimeGrid,
    g: &GeneratorSpec,
    xi: &TerminalFunctional,
    cfg: &McConfig,
) -> Result<McSolution> {
    let bundle = simulate_paths_with(model, grid, cfg.paths, cfg.seed, cfg.law)?;
    solve_mc_on(&bundle, g, xi, cfg)
}

/// As [`solve_mc`] on an existing path bundle (`cfg.paths` and `cfg.law` are taken
/// from the bundle and ignored).
pub fn solve_mc_on(bundle: &PathBundle, g: &GeneratorSpec, xi: &TerminalFunctional, cfg: &McConfig) -> Result<McSolution> {
    let j = bundle.num_marks();
    if g.num_marks() != j {
        return Err(Error::DimensionMismatch {
            expected: j,
            got: g.num_marks(),
        });
    }
    let dim = cfg.basis.dimension(j);
    let min = PATHS_PER_COEFFICIENT * dim;
    if bundle.count() < min {
        return Err(Error::TooFewPaths {
            paths: bundle.count(),
            dim,
            min,
        });
    }
    let all: Vec<usize> = (0..bundle.count()).collect();
    let main = backward(bundle, &all, g, xi, cfg, cfg.keep_grid)?;

    let bootstrap_y0: Vec<f64> = (0..cfg.bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = path_rng(cfg.seed, BOOTSTRAP_STREAM + r as u64);
            let idx: Vec<usize> = (0..bundle.count())
                .map(|_| rng.random_range(0..bundle.count()))
                .collect();
            backward(bundle, &idx, g, xi, cfg, false).map(|o| o.y0)
        })
        .collect::<Result<_>>()?;
    let y0_se = (bootstrap_y0.len() >= 2).then(|| sample_sd(&bootstrap_y0));

    Ok(McSolution {
        y0: main.y0,
        y0_se,
        bootstrap_y0,
        steps: main.steps,
        reductions: main.reductions,
        grid: main.grid,
    })
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

struct BackwardOutput {
    y0: f64,
    steps: Vec<StepStat>,
    reductions: Vec<DegreeReduction>,
    grid: Option<SolutionGrid>,
}

/// Running path state, moved backward one step at a time.
struct States {
    x: Vec<f64>,
    w: Vec<f64>,
    counts: Vec<u32>,
}

fn backward(
    bundle: &PathBundle,
    idx: &[usize],
    g: &GeneratorSpec,
    xi: &TerminalFunctional,
    cfg: &McConfig,
    keep_grid: bool,
) -> Result<BackwardOutput> {
    let model = bundle.model();
    let grid = bundle.grid();
    let dt = grid.dt();
    let n_steps = grid.steps();
    let j = bundle.num_marks();
    let p_count = idx.len();
    let brownian = model.sigma() > 0.0;
    let var_dn: Vec<f64> = model
        .marks()
        .iter()
        .map(|m| {
            let p = m.lambda * dt;
            match bundle.law() {
                IncrementLaw::Lattice => p * (1.0 - p),
                IncrementLaw::Gaussian => p,
            }
        })
        .collect();

    // Terminal state by forward summation.
    let mut st = States {
        x: idx.iter().map(|&p| bundle.terminal_state(p)).collect(),
        w: idx.iter().map(|&p| (0..n_steps).map(|i| bundle.dw(p, i)).sum()).collect(),
        counts: idx.iter().flat_map(|&p| bundle.total_counts(p)).collect(),
    };
    let t_end = grid.time(n_steps);
    let mut y: Vec<f64> = (0..p_count)
        .into_par_iter()
        .map(|q| xi.eval(&PathContext::new(t_end, st.x[q], st.w[q], &st.counts[q * j..(q + 1) * j])))
        .collect();

    let weight = 1.0 / p_count as f64;
    let mut levels: Vec<Level> = Vec::new();
    if keep_grid {
        levels.push(Level {
            weights: vec![weight; p_count],
            y: y.clone(),
            z: vec![],
            u: vec![],
        });
    }
    let mut steps = vec![step_stat(n_steps, &y, &[], &[], j)];
    let mut reductions = Vec::new();

    for i in (0..n_steps).rev() {
        // Move the state from t_{i+1} back to t_i.
        for (q, &p) in idx.iter().enumerate() {
            let counts_i = (0..j).map(|m| bundle.dn(p, i, m) as f64);
            st.x[q] -= model.increment(dt, bundle.dw(p, i), counts_i);
            st.w[q] -= bundle.dw(p, i);
            for m in 0..j {
                st.counts[q * j + m] -= bundle.dn(p, i, m);
            }
        }
        if i == 0 {
            st.x.iter_mut().for_each(|v| *v = 0.0);
            st.w.iter_mut().for_each(|v| *v = 0.0);
        }

        // Targets: Y, Y ΔW, Y ΔÑ_j.
        let ncols = 2 + j;
        let mut targets = DMatrix::<f64>::zeros(p_count, ncols);
        for (q, &p) in idx.iter().enumerate() {
            let yv = y[q];
            targets[(q, 0)] = yv;
            targets[(q, 1)] = yv * bundle.dw(p, i);
            for m in 0..j {
                targets[(q, 2 + m)] = yv * bundle.dn_tilde(p, i, m);
            }
        }
        let (design, used) = design_matrix(&st, j, &cfg.basis);
        let (fitted, degree) = fit(&design, &used, &targets, i)?;
        if degree < used.poly_degree {
            reductions.push(DegreeReduction {
                step: i,
                from: used.poly_degree,
                to: degree,
            });
        }

        let t = grid.time(i);
        let zs: Vec<f64> = (0..p_count)
            .map(|q| if brownian { fitted[(q, 1)] / dt } else { 0.0 })
            .collect();
        let us: Vec<f64> = (0..p_count)
            .flat_map(|q| (0..j).map(move |m| (q, m)))
            .map(|(q, m)| fitted[(q, 2 + m)] / var_dn[m])
            .collect();
        y = (0..p_count)
            .into_par_iter()
            .map(|q| {
                let e = fitted[(q, 0)];
                let (z, u) = (zs[q], &us[q * j..(q + 1) * j]);
                let ctx = PathContext::new(t, st.x[q], st.w[q], &st.counts[q * j..(q + 1) * j]);
                match cfg.scheme {
                    McScheme::Explicit => Ok(e + dt * g.eval(&ctx, e, z, u)),
                    McScheme::Implicit => implicit(e, dt, |v| g.eval(&ctx, v, z, u), &cfg.solver).ok_or(
                        Error::FixedPointDiverged {
                            level: i,
                            node: idx[q],
                            iterations: cfg.solver.max_iter,
                        },
                    ),
                }
            })
            .collect::<Result<_>>()?;
        steps.push(step_stat(i, &y, &zs, &us, j));
        if keep_grid {
            levels.push(Level {
                weights: vec![weight; p_count],
                y: y.clone(),
                z: zs,
                u: us,
            });
        }
    }
    steps.reverse();
    levels.reverse();
    reductions.reverse();

    let y0 = y.iter().sum::<f64>() * weight;
    let grid_out = keep_grid.then(|| {
        SolutionGrid::new(Indexing::Paths { count: p_count }, dt, model.lambdas(), levels)
    });
    Ok(BackwardOutput {
        y0,
        steps,
        reductions,
        grid: grid_out,
    })
}

fn implicit(e: f64, dt: f64, f: impl Fn(f64) -> f64, opts: &SolverOptions) -> Option<f64> {
    let mut y = e;
    for _ in 0..opts.max_iter {
        let next = e + dt * f(y);
        if !next.is_finite() {
            return None;
        }
        let done = (next - y).abs() <= opts.tol * next.abs().max(1.0);
        y = next;
        if done {
            return Some(y);
        }
    }
    None
}

fn step_stat(step: usize, y: &[f64], z: &[f64], u: &[f64], j: usize) -> StepStat {
    let n = y.len() as f64;
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let y_mean = mean(y);
    let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let u_mean = (0..j)
        .map(|m| {
            if u.is_empty() {
                0.0
            } else {
                u.iter().skip(m).step_by(j).sum::<f64>() / n
            }
        })
        .collect();
    StepStat {
        step,
        y_mean,
        y_se: (var / n).sqrt(),
        z_mean: mean(z),
        u_mean,
    }
}

/// Layout of the design matrix columns.
struct Columns {
    /// Number of polynomial columns of `X` kept (after dropping a constant `X`).
    poly_degree: usize,
    /// Number of count columns kept.
    count_cols: usize,
}

/// Intercept, powers `1..=degree` of the standardized `X`, then standardized counts.
/// Columns that are constant across paths are dropped.
fn design_matrix(st: &States, j: usize, basis: &RegressionBasis) -> (DMatrix<f64>, Columns) {
    let n = st.x.len();
    let standardize = |v: &[f64]| -> Option<Vec<f64>> {
        let m = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        (sd > 1e-12 * (1.0 + m.abs())).then(|| v.iter().map(|x| (x - m) / sd).collect())
    };
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut poly_degree = 0;
    if basis.degree > 0 {
        if let Some(z) = standardize(&st.x) {
            for d in 1..=basis.degree {
                cols.push(z.iter().map(|v| v.powi(d as i32)).collect());
            }
            poly_degree = basis.degree;
        }
    }
    let mut count_cols = 0;
    if basis.count_features {
        for m in 0..j {
            let c: Vec<f64> = (0..n).map(|q| st.counts[q * j + m] as f64).collect();
            if let Some(z) = standardize(&c) {
                cols.push(z);
                count_cols += 1;
            }
        }
    }
    let a = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
    (
        a,
        Columns {
            poly_degree,
            count_cols,
        },
    )
}

/// Least-squares fit of every target column; lowers the polynomial degree until the
/// normalized Gram matrix is well conditioned. Returns fitted values and the degree
/// used.
fn fit(a: &DMatrix<f64>, cols: &Columns, targets: &DMatrix<f64>, step: usize) -> Result<(DMatrix<f64>, usize)> {
    let n = a.nrows() as f64;
    let mut degree = cols.poly_degree;
    loop {
        // Keep the intercept, the first `degree` powers, and all count columns.
        let keep: Vec<usize> = (0..1 + degree)
            .chain((1 + cols.poly_degree)..(1 + cols.poly_degree + cols.count_cols))
            .collect();
        let sub = if keep.len() == a.ncols() {
            a.clone()
        } else {
            a.select_columns(&keep)
        };
        let gram = sub.tr_mul(&sub) / n;
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min > RANK_TOL * max {
            let rhs = sub.tr_mul(targets) / n;
            let chol = gram.cholesky().ok_or(Error::RankDeficient { step })?;
            let coef = chol.solve(&rhs);
            return Ok((sub * coef, degree));
        }
        if degree == 0 {
            // Intercept plus count columns still singular: drop the counts.
            let mean = targets.row_mean();
            let fitted = DMatrix::from_fn(sub.nrows(), targets.ncols(), |_, c| mean[c]);
            return Ok((fitted, 0));
        }
        degree -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generator_from_ref, GeneratorRef};
    use crate::levy_model::Mark;

    #[test]
    fn zero_generator_brownian_terminal() {
        let m = LevyModel::new(0.0, 1.0, vec![]).unwrap();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let g = generator_from_ref(&GeneratorRef::named("zero"), &m).unwrap();
        let xi = TerminalFunctional::by_name("w_T", 0).unwrap();
        let sol = solve_mc(&m, &grid, &g, &xi, &McConfig::new(20_000, 7)).unwrap();
        let se = sol.y0_se.unwrap();
        assert!(sol.y0.abs() <= 3.0 * se, "{} vs se {}", sol.y0, se);
        // Z ≡ 1 on average at every step.
        for s in &sol.steps[..5] {
            assert!((s.z_mean - 1.0).abs() < 0.03, "{s:?}");
        }
    }

    #[test]
    fn too_few_paths() {
        let m = LevyModel::new(0.0, 1.0, vec![]).unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let g = generator_from_ref(&GeneratorRef::named("zero"), &m).unwrap();
        let xi = TerminalFunctional::by_name("x_T", 0).unwrap();
        assert!(matches!(
            solve_mc(&m, &grid, &g, &xi, &McConfig::new(39, 1)),
            Err(Error::TooFewPaths { .. })
        ));
    }

    #[test]
    fn seed_determinism() {
        let m = LevyModel::new(0.1, 0.5, vec![Mark::new(0.5, 1.0)]).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let g = generator_from_ref(&GeneratorRef::named("sin_y"), &m).unwrap();
        let xi = TerminalFunctional::by_name("tanh_x", 1).unwrap();
        let mut cfg = McConfig::new(2_000, 3);
        cfg.bootstrap = 4;
        let a = solve_mc(&m, &grid, &g, &xi, &cfg).unwrap();
        let b = solve_mc(&m, &grid, &g, &xi, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grid, b.grid);
    }

    #[test]
    fn degree_reduced_on_few_distinct_states() {
        // After one lattice step X takes two values, so only a linear fit is possible.
        let m = LevyModel::new(0.0, 1.0, vec![]).unwrap();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let g = generator_from_ref(&GeneratorRef::named("zero"), &m).unwrap();
        let xi = TerminalFunctional::by_name("tanh_x", 0).unwrap();
        let mut cfg = McConfig::new(1_000, 5);
        cfg.law = IncrementLaw::Lattice;
        cfg.bootstrap = 0;
        let sol = solve_mc(&m, &grid, &g, &xi, &cfg).unwrap();
        assert!(sol.reductions.iter().any(|r| r.step == 1 && r.to == 1), "{:?}", sol.reductions);
    }

    #[test]
    fn csv_header() {
        let m = LevyModel::new(0.0, 0.0, vec![Mark::new(2.0, 1.0)]).unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let g = generator_from_ref(&GeneratorRef::named("zero"), &m).unwrap();
        let xi = TerminalFunctional::by_name("x_T", 1).unwrap();
        let mut cfg = McConfig::new(100, 1);
        cfg.bootstrap = 0;
        let sol = solve_mc(&m, &grid, &g, &xi, &cfg).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("step,Y_mean,Y_se,Z_mean,U_1_mean\n0,"));
        assert_eq!(s.lines().count(), 4);
    }
}
