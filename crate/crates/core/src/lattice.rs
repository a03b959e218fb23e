//! Exact scenario trees.
//!
//! At every step each node has `b = (2 if σ > 0 else 1) · 2^J` children. A branch
//! index `br ∈ 0..b` encodes the step's noise: bit `j < J` is set when mark `j`
//! fires (probability `p_j = λ_j dt`), bit `J` (only when σ > 0) selects
//! `ΔW = −√dt` instead of `+√dt`. Node `k` at level `i` has children
//! `k·b + br` at level `i + 1`, so the base-`b` digits of a node index spell the
//! path from the root.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, PathContext};
use crate::levy_model::{retained_at, LevyModel, TimeGrid};
use crate::solution::{Indexing, Level, SolutionGrid};
use crate::terminal::TerminalFunctional;

pub const DEFAULT_NODE_CAP: usize = 2_000_000;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Fixed-point controls for the implicit one-step equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when successive iterates differ by at most `tol · max(1, |y|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Node data of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeLevel {
    pub prob: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    /// Jump counts since time 0, `num_marks` entries per node.
    pub counts: Vec<u32>,
}

impl TreeLevel {
    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioTree {
    model: LevyModel,
    grid: TimeGrid,
    brownian: bool,
    branching: usize,
    jump_prob: Vec<f64>,
    branch_prob: Vec<f64>,
    branch_dw: Vec<f64>,
    /// `ΔÑ_j` per branch, `num_marks` entries per branch.
    branch_dn: Vec<f64>,
    levels: Vec<TreeLevel>,
}

/// Total node count `Σ_{i=0}^{N} b^i`, saturating.
pub fn tree_node_count(branching: usize, steps: usize) -> u128 {
    let b = branching as u128;
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=steps {
        total = total.saturating_add(level);
        level = level.saturating_mul(b);
    }
    total
}

pub fn branching_factor(model: &LevyModel) -> usize {
    (if model.sigma() > 0.0 { 2 } else { 1 }) << model.num_marks()
}

/// [`build_tree_with_cap`] with the default cap of `2·10⁶` nodes.
pub fn build_tree(model: &LevyModel, grid: &TimeGrid) -> Result<ScenarioTree> {
    build_tree_with_cap(model, grid, DEFAULT_NODE_CAP)
}

pub fn build_tree_with_cap(model: &LevyModel, grid: &TimeGrid, cap: usize) -> Result<ScenarioTree> {
    model.check_tree_compatible(grid)?;
    let j = model.num_marks();
    if j >= usize::BITS as usize - 2 {
        return Err(Error::InvalidModel(format!("{j} marks are too many for a tree")));
    }
    let b = branching_factor(model);
    let nodes = tree_node_count(b, grid.steps());
    if nodes > cap as u128 {
        return Err(Error::NodeCapExceeded { nodes, cap });
    }

    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let brownian = model.sigma() > 0.0;
    let jump_prob: Vec<f64> = model.marks().iter().map(|m| m.lambda * dt).collect();
    let mut branch_prob = Vec::with_capacity(b);
    let mut branch_dw = Vec::with_capacity(b);
    let mut branch_dn = Vec::with_capacity(b * j);
    for br in 0..b {
        let mut p = if brownian { 0.5 } else { 1.0 };
        for (m, &pj) in jump_prob.iter().enumerate() {
            let fired = (br >> m) & 1 == 1;
            p *= if fired { pj } else { 1.0 - pj };
            branch_dn.push(if fired { 1.0 - pj } else { -pj });
        }
        branch_prob.push(p);
        branch_dw.push(match (brownian, (br >> j) & 1) {
            (false, _) => 0.0,
            (true, 0) => sqrt_dt,
            (true, _) => -sqrt_dt,
        });
    }

    let mut levels = Vec::with_capacity(grid.steps() + 1);
    levels.push(TreeLevel {
        prob: vec![1.0],
        x: vec![0.0],
        w: vec![0.0],
        counts: vec![0; j],
    });
    for _ in 0..grid.steps() {
        let prev = levels.last().expect("root level");
        let n = prev.len() * b;
        let (prob, (x, w)): (Vec<f64>, (Vec<f64>, Vec<f64>)) = (0..n)
            .into_par_iter()
            .map(|c| {
                let (k, br) = (c / b, c % b);
                let fired = (0..j).map(|m| ((br >> m) & 1) as f64);
                let dx = model.increment(dt, branch_dw[br], fired);
                (prev.prob[k] * branch_prob[br], (prev.x[k] + dx, prev.w[k] + branch_dw[br]))
            })
            .unzip();
        let mut counts = Vec::with_capacity(n * j);
        for c in 0..n {
            let (k, br) = (c / b, c % b);
            for m in 0..j {
                counts.push(prev.counts[k * j + m] + ((br >> m) & 1) as u32);
            }
        }
        levels.push(TreeLevel { prob, x, w, counts });
    }

    Ok(ScenarioTree {
        model: model.clone(),
        grid: *grid,
        brownian,
        branching: b,
        jump_prob,
        branch_prob,
        branch_dw,
        branch_dn,
        levels,
    })
}

/// Node grouping induced by `E_n`: nodes that differ only in small-mark digits.
struct Classes {
    /// Node indices ordered by class.
    order: Vec<usize>,
    /// Within-class probability of each entry of `order`.
    weight: Vec<f64>,
    /// Class `c` occupies `order[bounds[c]..bounds[c + 1]]`.
    bounds: Vec<usize>,
    /// Representative (all small-mark bits cleared) per class.
    rep: Vec<usize>,
}

/// Max norm of the one-step defects of a solution, see [`ScenarioTree::martingale_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    /// `max |E_i[Y_{i+1}] − Y_i|`.
    pub max_martingale_defect: f64,
    /// `max |Y_{i+1} − Y_i − Z_i ΔW_i − Σ_j U_{i,j} ΔÑ_{i,j}|` over all edges.
    pub max_representation_residual: f64,
    /// `E Σ_i (residual_i)²`: the part of the increments orthogonal to the span of
    /// `ΔW` and the `ΔÑ_j`.
    pub orthogonal_norm2: f64,
    /// `(level, child node)` of the largest representation residual.
    pub witness: Option<(usize, usize)>,
}

impl ScenarioTree {
    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn num_marks(&self) -> usize {
        self.model.num_marks()
    }

    pub fn has_brownian(&self) -> bool {
        self.brownian
    }

    pub fn levels(&self) -> &[TreeLevel] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &TreeLevel {
        &self.levels[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.levels.iter().map(TreeLevel::len).sum()
    }

    pub fn branch_prob(&self, br: usize) -> f64 {
        self.branch_prob[br]
    }

    pub fn branch_dw(&self, br: usize) -> f64 {
        self.branch_dw[br]
    }

    pub fn branch_dn(&self, br: usize, mark: usize) -> f64 {
        self.branch_dn[br * self.num_marks() + mark]
    }

    pub fn fired(&self, br: usize, mark: usize) -> bool {
        (br >> mark) & 1 == 1
    }

    pub fn counts(&self, level: usize, node: usize) -> &[u32] {
        let j = self.num_marks();
        &self.levels[level].counts[node * j..(node + 1) * j]
    }

    /// The generator's view of node `node` at level `level`.
    pub fn context(&self, level: usize, node: usize) -> PathContext<'_> {
        let l = &self.levels[level];
        PathContext::new(self.grid.time(level), l.x[node], l.w[node], self.counts(level, node))
    }

    /// `ξ` at every leaf.
    pub fn terminal_values(&self, xi: &TerminalFunctional) -> Vec<f64> {
        let n = self.steps();
        (0..self.levels[n].len())
            .into_par_iter()
            .map(|k| xi.eval(&self.context(n, k)))
            .collect()
    }

    /// Exact `E[v | F_{t_i}]` for values `v` given on level `i + 1`.
    pub fn conditional_expectation(&self, values: &[f64]) -> Result<Vec<f64>> {
        let b = self.branching;
        if values.is_empty() || !values.len().is_multiple_of(b) || self.level_of(values.len()).is_none() {
            return Err(Error::DimensionMismatch {
                expected: b,
                got: values.len(),
            });
        }
        Ok(values
            .par_chunks_exact(b)
            .map(|ch| ch.iter().zip(&self.branch_prob).map(|(v, p)| p * v).sum())
            .collect())
    }

    fn level_of(&self, len: usize) -> Option<usize> {
        self.levels.iter().rposition(|l| l.len() == len)
    }

    /// Bit mask of the marks with `|x_j| < 1/n`.
    pub fn small_mark_mask(&self, n: u32) -> usize {
        self.model
            .marks()
            .iter()
            .enumerate()
            .filter(|(_, m)| !retained_at(m.x, n))
            .fold(0, |acc, (j, _)| acc | (1 << j))
    }

    /// `(representative, within-class weight)` of node `k` at level `level`.
    fn class_of(&self, level: usize, mut k: usize, mask: usize) -> (usize, f64) {
        let b = self.branching;
        let mut rep = 0;
        let mut scale = 1;
        let mut weight = 1.0;
        for _ in 0..level {
            let digit = k % b;
            k /= b;
            rep += (digit & !mask) * scale;
            scale *= b;
            for (j, &p) in self.jump_prob.iter().enumerate() {
                if (mask >> j) & 1 == 1 {
                    weight *= if (digit >> j) & 1 == 1 { p } else { 1.0 - p };
                }
            }
        }
        (rep, weight)
    }

    fn classes(&self, level: usize, mask: usize) -> Classes {
        let n = self.levels[level].len();
        if mask == 0 {
            return Classes {
                order: (0..n).collect(),
                weight: vec![1.0; n],
                bounds: (0..=n).collect(),
                rep: (0..n).collect(),
            };
        }
        let info: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|k| self.class_of(level, k, mask))
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&k| (info[k].0, k));
        let weight = order.iter().map(|&k| info[k].1).collect();
        let mut bounds = vec![0];
        let mut rep = vec![];
        for (pos, &k) in order.iter().enumerate() {
            if rep.last() != Some(&info[k].0) {
                if pos > 0 {
                    bounds.push(pos);
                }
                rep.push(info[k].0);
            }
        }
        bounds.push(n);
        Classes {
            order,
            weight,
            bounds,
            rep,
        }
    }

    fn project_mask(&self, level: usize, values: &[f64], mask: usize) -> Vec<f64> {
        if mask == 0 || level == 0 {
            return values.to_vec();
        }
        let cls = self.classes(level, mask);
        let mut out = vec![0.0; values.len()];
        for c in 0..cls.rep.len() {
            let range = cls.bounds[c]..cls.bounds[c + 1];
            let first = values[cls.order[range.start]];
            // Exact on class-constant input, which makes E_n idempotent bit for bit.
            let avg: f64 = if range.clone().all(|p| values[cls.order[p]] == first) {
                first
            } else {
                range.clone().map(|p| cls.weight[p] * values[cls.order[p]]).sum()
            };
            for p in range {
                out[cls.order[p]] = avg;
            }
        }
        out
    }

    /// Exact `E_n v = E[v | J^n]`, where `J^n` is generated by the Brownian signs
    /// and the marks with `|x_j| ≥ 1/n`. `values` must be indexed by the nodes of
    /// one level (identified by its length).
    pub fn project_en(&self, values: &[f64], n: u32) -> Result<Vec<f64>> {
        let level = self.level_of(values.len()).ok_or(Error::DimensionMismatch {
            expected: self.levels.last().map_or(0, TreeLevel::len),
            got: values.len(),
        })?;
        Ok(self.project_mask(level, values, self.small_mark_mask(n)))
    }

    /// Solves `Y_i = E_i[Y_{i+1}] + dt f(t_i, Y_i, Z_i, U_i)` backward from `Y_N = ξ`.
    pub fn solve_backward(&self, g: &GeneratorSpec, xi: &TerminalFunctional, tol: f64) -> Result<SolutionGrid> {
        self.solve(g, xi, &SolverOptions::with_tol(tol))
    }

    pub fn solve(&self, g: &GeneratorSpec, xi: &TerminalFunctional, opts: &SolverOptions) -> Result<SolutionGrid> {
        self.solve_masked(g, xi, 0, opts)
    }

    /// The BSDE with data `(E_n ξ, E_n ∘ f)` driven by the marks with `|x_j| ≥ 1/n`:
    /// `U` vanishes on the removed marks and the solution is constant across their
    /// branch coordinates.
    pub fn solve_truncated(
        &self,
        g: &GeneratorSpec,
        xi: &TerminalFunctional,
        n: u32,
        opts: &SolverOptions,
    ) -> Result<SolutionGrid> {
        self.solve_masked(g, xi, self.small_mark_mask(n), opts)
    }

    fn solve_masked(
        &self,
        g: &GeneratorSpec,
        xi: &TerminalFunctional,
        mask: usize,
        opts: &SolverOptions,
    ) -> Result<SolutionGrid> {
        let j = self.num_marks();
        if g.num_marks() != j {
            return Err(Error::DimensionMismatch {
                expected: j,
                got: g.num_marks(),
            });
        }
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {}", opts.tol)));
        }
        let b = self.branching;
        let n_steps = self.steps();
        let dt = self.grid.dt();

        let terminal = self.project_mask(n_steps, &self.terminal_values(xi), mask);
        let mut out: Vec<Option<Level>> = vec![None; n_steps + 1];
        out[n_steps] = Some(Level {
            weights: self.levels[n_steps].prob.clone(),
            y: terminal,
            z: vec![],
            u: vec![],
        });

        for i in (0..n_steps).rev() {
            let next = &out[i + 1].as_ref().expect("filled").y;
            let cls = self.classes(i, mask);
            let solved: Vec<(f64, f64, Vec<f64>)> = (0..cls.rep.len())
                .into_par_iter()
                .map(|c| {
                    let rep = cls.rep[c];
                    let children = &next[rep * b..(rep + 1) * b];
                    let mut e = 0.0;
                    let mut z = 0.0;
                    let mut u = vec![0.0; j];
                    for (br, &v) in children.iter().enumerate() {
                        let pv = self.branch_prob[br] * v;
                        e += pv;
                        z += pv * self.branch_dw[br];
                        for (m, um) in u.iter_mut().enumerate() {
                            *um += pv * self.branch_dn[br * j + m];
                        }
                    }
                    let z = if self.brownian { z / dt } else { 0.0 };
                    for (m, um) in u.iter_mut().enumerate() {
                        if (mask >> m) & 1 == 1 {
                            *um = 0.0;
                        } else {
                            let p = self.jump_prob[m];
                            *um /= p * (1.0 - p);
                        }
                    }
                    let members = cls.bounds[c]..cls.bounds[c + 1];
                    let f_n = |y: f64| -> f64 {
                        members
                            .clone()
                            .map(|p| cls.weight[p] * g.eval(&self.context(i, cls.order[p]), y, z, &u))
                            .sum()
                    };
                    let y = fixed_point(e, dt, f_n, opts).map_err(|iterations| Error::FixedPointDiverged {
                        level: i,
                        node: rep,
                        iterations,
                    })?;
                    Ok((y, z, u))
                })
                .collect::<Result<_>>()?;

            let n = self.levels[i].len();
            let mut y = vec![0.0; n];
            let mut zs = vec![0.0; n];
            let mut us = vec![0.0; n * j];
            for (c, (yc, zc, uc)) in solved.into_iter().enumerate() {
                for p in cls.bounds[c]..cls.bounds[c + 1] {
                    let k = cls.order[p];
                    y[k] = yc;
                    zs[k] = zc;
                    us[k * j..(k + 1) * j].copy_from_slice(&uc);
                }
            }
            out[i] = Some(Level {
                weights: self.levels[i].prob.clone(),
                y,
                z: zs,
                u: us,
            });
        }

        Ok(SolutionGrid::new(
            Indexing::Tree { branching: b },
            dt,
            self.model.lambdas(),
            out.into_iter().map(|l| l.expect("filled")).collect(),
        ))
    }

    /// One-step martingale and representation defects of a solution on this tree.
    pub fn martingale_check(&self, sol: &SolutionGrid) -> Result<MartingaleReport> {
        let b = self.branching;
        let j = self.num_marks();
        if sol.indexing() != (Indexing::Tree { branching: b }) || sol.steps() != self.steps() {
            return Err(Error::MismatchedIndexing("solution was not computed on this tree".into()));
        }
        let mut report = MartingaleReport {
            max_martingale_defect: 0.0,
            max_representation_residual: 0.0,
            orthogonal_norm2: 0.0,
            witness: None,
        };
        for i in 0..self.steps() {
            let cur = sol.level(i);
            let next = &sol.level(i + 1).y;
            let e = self.conditional_expectation(next)?;
            for k in 0..cur.len() {
                report.max_martingale_defect = report.max_martingale_defect.max((e[k] - cur.y[k]).abs());
                let u = sol.u_at(i, k);
                for br in 0..b {
                    let mut pred = cur.y[k] + cur.z[k] * self.branch_dw[br];
                    for (m, um) in u.iter().enumerate() {
                        pred += um * self.branch_dn[br * j + m];
                    }
                    let r = next[k * b + br] - pred;
                    report.orthogonal_norm2 += cur.weights[k] * self.branch_prob[br] * r * r;
                    if r.abs() > report.max_representation_residual {
                        report.max_representation_residual = r.abs();
                        report.witness = Some((i + 1, k * b + br));
                    }
                }
            }
        }
        Ok(report)
    }
}

/// Iterates `y ← e + dt·f(y)` from `y = e`; `Err` carries the iteration count.
fn fixed_point(e: f64, dt: f64, f: impl Fn(f64) -> f64, opts: &SolverOptions) -> std::result::Result<f64, usize> {
    let mut y = e;
    for it in 1..=opts.max_iter {
        let next = e + dt * f(y);
        if !next.is_finite() {
            return Err(it);
        }
        let done = (next - y).abs() <= opts.tol * next.abs().max(1.0);
        y = next;
        if done {
            return Ok(y);
        }
    }
    Err(opts.max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generator_from_ref, GeneratorRef};
    use crate::levy_model::Mark;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    fn gen(name: &str, model: &LevyModel) -> GeneratorSpec {
        generator_from_ref(&GeneratorRef::named(name), model).unwrap()
    }

    fn xi(name: &str, model: &LevyModel) -> TerminalFunctional {
        TerminalFunctional::by_name(name, model.num_marks()).unwrap()
    }

    #[test]
    fn brownian_binary_tree() {
        let m = LevyModel::new(0.0, 1.0, vec![]).unwrap();
        let t = build_tree(&m, &grid(1.0, 3)).unwrap();
        assert_eq!(t.level(3).len(), 8);
        for &p in &t.level(3).prob {
            assert_eq!(p, 0.125);
        }
    }

    #[test]
    fn single_mark_two_leaves() {
        let m = LevyModel::new(0.0, 0.0, vec![Mark::new(1.0, 0.1)]).unwrap();
        let t = build_tree(&m, &grid(1.0, 1)).unwrap();
        let mut p = t.level(1).prob.clone();
        p.sort_by(f64::total_cmp);
        assert!((p[0] - 0.1).abs() < 1e-15 && (p[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn two_marks_with_brownian() {
        let m = LevyModel::new(0.0, 1.0, vec![Mark::new(0.5, 1.0), Mark::new(2.0, 0.5)]).unwrap();
        let t = build_tree(&m, &grid(1.0, 2)).unwrap();
        assert_eq!(t.level(2).len(), 64);
        let s: f64 = t.level(2).prob.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn caps_and_intensity() {
        let m = LevyModel::new(0.0, 1.0, vec![Mark::new(0.5, 1.0)]).unwrap();
        assert!(matches!(
            build_tree_with_cap(&m, &grid(1.0, 20), 1000),
            Err(Error::NodeCapExceeded { .. })
        ));
        let hot = LevyModel::new(0.0, 0.0, vec![Mark::new(0.5, 4.0)]).unwrap();
        assert!(matches!(
            build_tree(&hot, &grid(1.0, 4)),
            Err(Error::IntensityTooLarge { .. })
        ));
    }

    #[test]
    fn conditional_expectation_examples() {
        let m = LevyModel::new(0.0, 1.0, vec![Mark::new(0.5, 1.0)]).unwrap();
        let t = build_tree(&m, &grid(1.0, 10)).unwrap();
        let b = t.branching();
        let c = t.conditional_expectation(&vec![3.5; b]).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0] - 3.5).abs() < 1e-15);
        let dw: Vec<f64> = (0..b).map(|br| t.branch_dw(br)).collect();
        assert!(t.conditional_expectation(&dw).unwrap()[0].abs() < 1e-16);
        let dn: Vec<f64> = (0..b).map(|br| t.branch_dn(br, 0)).collect();
        assert!(t.conditional_expectation(&dn).unwrap()[0].abs() < 1e-17);
        assert!(t.conditional_expectation(&[1.0; 3]).is_err());
    }

    #[test]
    fn zero_generator_w_t() {
        let m = LevyModel::new(0.0, 1.0, vec![]).unwrap();
        let t = build_tree(&m, &grid(1.0, 4)).unwrap();
        let sol = t.solve_backward(&gen("zero", &m), &xi("w_T", &m), 1e-12).unwrap();
        for i in 0..=4 {
            for (k, y) in sol.level(i).y.iter().enumerate() {
                assert!((y - t.level(i).w[k]).abs() < 1e-14);
            }
            if i < 4 {
                assert!(sol.level(i).z.iter().all(|z| (z - 1.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn linear_y_closed_form() {
        let m = LevyModel::new(0.0, 0.0, vec![]).unwrap();
        let (k, n) = (0.8, 10);
        let g = generator_from_ref(
            &GeneratorRef {
                k: Some(k),
                ..GeneratorRef::named("linear_y")
            },
            &m,
        )
        .unwrap();
        let t = build_tree(&m, &grid(1.0, n)).unwrap();
        let sol = t.solve_backward(&g, &xi("one", &m), 1e-13).unwrap();
        let expected = (1.0 - k * 0.1f64).powi(-(n as i32));
        assert!((sol.y0() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn jump_indicator_probability() {
        let (lam, n) = (1.5, 6);
        let m = LevyModel::new(0.0, 0.0, vec![Mark::new(2.0, lam)]).unwrap();
        let t = build_tree(&m, &grid(1.0, n)).unwrap();
        let sol = t
            .solve_backward(&gen("zero", &m), &xi("jump_indicator:0", &m), 1e-12)
            .unwrap();
        let expected = 1.0 - (1.0 - lam / n as f64).powi(n as i32);
        assert!((sol.y0() - expected).abs() < 1e-14);
    }

    fn two_mark_tree() -> ScenarioTree {
        let m = LevyModel::new(0.1, 1.0, vec![Mark::new(0.05, 2.0), Mark::new(0.5, 1.0)]).unwrap();
        build_tree(&m, &grid(1.0, 3)).unwrap()
    }

    #[test]
    fn projection_examples() {
        let t = two_mark_tree();
        // Level 1, values = 1{small mark fired}: E_4 gives λdt.
        let v: Vec<f64> = (0..t.branching()).map(|br| if t.fired(br, 0) { 1.0 } else { 0.0 }).collect();
        let p = t.project_en(&v, 4).unwrap();
        let lam_dt = 2.0 / 3.0;
        assert!(p.iter().all(|x| (x - lam_dt).abs() < 1e-15));
        // Independent of the small mark: unchanged.
        let w = t.level(2).w.clone();
        assert_eq!(t.project_en(&w, 4).unwrap(), w);
        // Idempotent.
        let x = t.level(3).x.clone();
        let once = t.project_en(&x, 4).unwrap();
        assert_eq!(t.project_en(&once, 4).unwrap(), once);
        // No mark removed: identity.
        assert_eq!(t.project_en(&x, 100).unwrap(), x);
    }

    #[test]
    fn truncated_equals_full_when_nothing_removed() {
        let t = two_mark_tree();
        let m = t.model().clone();
        let g = gen("sin_y", &m);
        let full = t.solve(&g, &xi("tanh_x", &m), &SolverOptions::default()).unwrap();
        let tr = t.solve_truncated(&g, &xi("tanh_x", &m), 100, &SolverOptions::default()).unwrap();
        assert_eq!(full, tr);
    }

    #[test]
    fn truncated_is_constant_across_small_marks() {
        let t = two_mark_tree();
        let m = t.model().clone();
        let g = gen("intro_example", &m);
        let sol = t.solve_truncated(&g, &xi("x_T", &m), 4, &SolverOptions::default()).unwrap();
        for i in 0..=t.steps() {
            let y = &sol.level(i).y;
            assert_eq!(&t.project_en(y, 4).unwrap(), y);
            if i < t.steps() {
                for k in 0..y.len() {
                    assert_eq!(sol.u_at(i, k)[0], 0.0);
                }
            }
        }
    }

    #[test]
    fn martingale_check_binary_is_exact() {
        let m = LevyModel::new(0.0, 1.0, vec![]).unwrap();
        let t = build_tree(&m, &grid(1.0, 5)).unwrap();
        let sol = t.solve_backward(&gen("zero", &m), &xi("tanh_x", &m), 1e-12).unwrap();
        let r = t.martingale_check(&sol).unwrap();
        assert!(r.max_martingale_defect < 1e-14);
        assert!(r.max_representation_residual < 1e-14);
    }

    #[test]
    fn divergent_fixed_point_is_reported() {
        let m = LevyModel::new(0.0, 0.0, vec![]).unwrap();
        let g = generator_from_ref(
            &GeneratorRef {
                k: Some(30.0),
                ..GeneratorRef::named("linear_y")
            },
            &m,
        )
        .unwrap();
        let t = build_tree(&m, &grid(1.0, 10)).unwrap();
        assert!(matches!(
            t.solve_backward(&g, &xi("one", &m), 1e-12),
            Err(Error::FixedPointDiverged { .. })
        ));
    }
}
