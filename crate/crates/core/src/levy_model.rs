//! The driving Lévy model `X_t = a t + σ W_t + Σ_{|x_j| ≤ 1} x_j Ñ_j(t) + Σ_{|x_j| > 1} x_j N_j(t)`
//! with a finite atomic Lévy measure `ν = Σ_j λ_j δ_{x_j}`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A jump size `x` firing with Poisson intensity `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub x: f64,
    pub lambda: f64,
}

impl Mark {
    pub fn new(x: f64, lambda: f64) -> Self {
        Self { x, lambda }
    }

    /// Marks with `|x| <= 1` enter the state through their compensated counts.
    pub fn is_compensated(&self) -> bool {
        self.x.abs() <= 1.0
    }
}

/// Drift, diffusion coefficient and a finite family of jump marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    drift: f64,
    sigma: f64,
    marks: Vec<Mark>,
}

impl LevyModel {
    pub fn new(drift: f64, sigma: f64, marks: Vec<Mark>) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidModel(format!("drift must be finite, got {drift}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidModel(format!("sigma must be >= 0, got {sigma}")));
        }
        for (j, m) in marks.iter().enumerate() {
            if !(m.lambda > 0.0 && m.lambda.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "mark {j}: intensity must be > 0, got {}",
                    m.lambda
                )));
            }
            if m.x == 0.0 || !m.x.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "mark {j}: jump size must be finite and non-zero, got {}",
                    m.x
                )));
            }
            if marks[..j].iter().any(|o| o.x == m.x) {
                return Err(Error::InvalidModel(format!(
                    "mark {j}: duplicate jump size {}",
                    m.x
                )));
            }
        }
        Ok(Self {
            drift,
            sigma,
            marks,
        })
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn num_marks(&self) -> usize {
        self.marks.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.marks.iter().map(|m| m.lambda).collect()
    }

    /// `ν(ℝ₀) = Σ_j λ_j`.
    pub fn total_intensity(&self) -> f64 {
        self.marks.iter().map(|m| m.lambda).sum()
    }

    /// `E X_t = a t + t Σ_{|x_j| > 1} λ_j x_j`.
    pub fn mean(&self, t: f64) -> f64 {
        self.drift * t
            + t * self
                .marks
                .iter()
                .filter(|m| !m.is_compensated())
                .map(|m| m.lambda * m.x)
                .sum::<f64>()
    }

    /// State increment over one step given the Brownian increment and the jump counts.
    pub fn increment(&self, dt: f64, dw: f64, counts: impl IntoIterator<Item = f64>) -> f64 {
        let mut dx = self.drift * dt + self.sigma * dw;
        for (m, n) in self.marks.iter().zip(counts) {
            if m.is_compensated() {
                dx += m.x * (n - m.lambda * dt);
            } else {
                dx += m.x * n;
            }
        }
        dx
    }

    /// Largest `λ_j dt` over the marks.
    pub fn max_jump_probability(&self, dt: f64) -> f64 {
        self.marks.iter().map(|m| m.lambda * dt).fold(0.0, f64::max)
    }

    /// Errors unless every mark fires with probability `λ_j dt < 1` per step.
    pub fn check_tree_compatible(&self, grid: &TimeGrid) -> Result<()> {
        let dt = grid.dt();
        for (j, m) in self.marks.iter().enumerate() {
            let p = m.lambda * dt;
            if p >= 1.0 {
                return Err(Error::IntensityTooLarge { mark: j, value: p });
            }
        }
        Ok(())
    }
}

/// Uniform grid `0 = t_0 < … < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be > 0, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }
}

/// An element of `L²(ν)`: one value per jump mark.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpVector(pub Vec<f64>);

impl JumpVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖u‖ = (Σ_j λ_j u_j²)^{1/2}`.
    pub fn norm(&self, model: &LevyModel) -> Result<f64> {
        levy_norm(self, model)
    }
}

impl From<Vec<f64>> for JumpVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Deref for JumpVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `‖u‖_{L²(ν)}`.
pub fn levy_norm(u: &JumpVector, model: &LevyModel) -> Result<f64> {
    if u.len() != model.num_marks() {
        return Err(Error::DimensionMismatch {
            expected: model.num_marks(),
            got: u.len(),
        });
    }
    Ok(weighted_norm(u, &model.lambdas()))
}

/// `(Σ_j w_j u_j²)^{1/2}` for raw slices.
pub fn weighted_norm(u: &[f64], weights: &[f64]) -> f64 {
    u.iter()
        .zip(weights)
        .map(|(v, w)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

/// Drops every mark with `|x_j| < 1/n`; a jump size exactly `1/n` is kept.
pub fn truncate_model(model: &LevyModel, n: u32) -> LevyModel {
    let marks = model
        .marks
        .iter()
        .copied()
        .filter(|m| retained_at(m.x, n))
        .collect();
    LevyModel {
        drift: model.drift,
        sigma: model.sigma,
        marks,
    }
}

/// Membership of a jump size in the truncated measure `χ_{1/n ≤ |x|} ν`.
pub fn retained_at(x: f64, n: u32) -> bool {
    x.abs() * n as f64 >= 1.0
}

/// Distribution of the one-step increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementLaw {
    /// `ΔW ~ N(0, dt)`, `ΔN_j ~ Poisson(λ_j dt)`.
    #[default]
    Gaussian,
    /// The scenario-tree law: `ΔW = ±√dt` with probability 1/2 (when σ > 0),
    /// `ΔN_j ~ Bernoulli(λ_j dt)`.
    Lattice,
}

/// Simulated increments for `count` paths on a grid.
///
/// Path `p` is generated from its own ChaCha8 stream: the generator is seeded with
/// the root seed and switched to stream number `p`, so a path does not depend on how
/// many other paths are simulated alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    model: LevyModel,
    grid: TimeGrid,
    count: usize,
    law: IncrementLaw,
    dw: Vec<f64>,
    dn: Vec<u32>,
}

impl PathBundle {
    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn law(&self) -> IncrementLaw {
        self.law
    }

    pub fn num_marks(&self) -> usize {
        self.model.num_marks()
    }

    pub fn dw(&self, path: usize, step: usize) -> f64 {
        self.dw[path * self.grid.steps + step]
    }

    pub fn dn(&self, path: usize, step: usize, mark: usize) -> u32 {
        let j = self.num_marks();
        self.dn[(path * self.grid.steps + step) * j + mark]
    }

    /// `ΔÑ = ΔN − λ dt`.
    pub fn dn_tilde(&self, path: usize, step: usize, mark: usize) -> f64 {
        self.dn(path, step, mark) as f64 - self.model.marks[mark].lambda * self.grid.dt()
    }

    /// `X_{t_0}, …, X_{t_N}` of one path, starting from `X_0 = 0`.
    pub fn states(&self, path: usize) -> Vec<f64> {
        let steps = self.grid.steps;
        let dt = self.grid.dt();
        let mut xs = Vec::with_capacity(steps + 1);
        let mut x = 0.0;
        xs.push(x);
        for i in 0..steps {
            let counts = (0..self.num_marks()).map(|j| self.dn(path, i, j) as f64);
            x += self.model.increment(dt, self.dw(path, i), counts);
            xs.push(x);
        }
        xs
    }

    pub fn terminal_state(&self, path: usize) -> f64 {
        *self.states(path).last().expect("grid has at least one step")
    }

    /// Total jump count of every mark along one path.
    pub fn total_counts(&self, path: usize) -> Vec<u32> {
        (0..self.num_marks())
            .map(|j| (0..self.grid.steps).map(|i| self.dn(path, i, j)).sum())
            .collect()
    }

    /// Writes `path,step,dW,dN_1..dN_J`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["path".to_string(), "step".to_string(), "dW".to_string()];
        header.extend((1..=self.num_marks()).map(|j| format!("dN_{j}")));
        w.write_record(&header)?;
        for p in 0..self.count {
            for i in 0..self.grid.steps {
                let mut rec = vec![p.to_string(), i.to_string(), format!("{:e}", self.dw(p, i))];
                rec.extend((0..self.num_marks()).map(|j| self.dn(p, i, j).to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `count` paths with Gaussian / Poisson increments.
pub fn simulate_paths(
    model: &LevyModel,
    grid: &TimeGrid,
    count: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_paths_with(model, grid, count, seed, IncrementLaw::Gaussian)
}

/// Simulates `count` paths under the given increment law.
///
/// The lattice law needs `λ_j dt < 1` for every mark; the Gaussian law accepts any grid.
pub fn simulate_paths_with(
    model: &LevyModel,
    grid: &TimeGrid,
    count: usize,
    seed: u64,
    law: IncrementLaw,
) -> Result<PathBundle> {
    if count == 0 {
        return Err(Error::InvalidArgument("path count must be >= 1".into()));
    }
    if law == IncrementLaw::Lattice {
        model.check_tree_compatible(grid)?;
    }
    let steps = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let nmarks = model.num_marks();
    let brownian = model.sigma() > 0.0;

    let per_path: Vec<(Vec<f64>, Vec<u32>)> = (0..count)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut dw = Vec::with_capacity(steps);
            let mut dn = Vec::with_capacity(steps * nmarks);
            for _ in 0..steps {
                let w = match law {
                    IncrementLaw::Gaussian => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * sqrt_dt
                    }
                    IncrementLaw::Lattice if brownian => {
                        if rng.random::<bool>() {
                            sqrt_dt
                        } else {
                            -sqrt_dt
                        }
                    }
                    IncrementLaw::Lattice => 0.0,
                };
                dw.push(w);
                for m in model.marks() {
                    let p = m.lambda * dt;
                    let n = match law {
                        IncrementLaw::Gaussian => {
                            let pois = Poisson::new(p).expect("positive intensity");
                            pois.sample(&mut rng) as u32
                        }
                        IncrementLaw::Lattice => u32::from(rng.random::<f64>() < p),
                    };
                    dn.push(n);
                }
            }
            (dw, dn)
        })
        .collect();

    let mut dw = Vec::with_capacity(count * steps);
    let mut dn = Vec::with_capacity(count * steps * nmarks);
    for (w, n) in per_path {
        dw.extend(w);
        dn.extend(n);
    }
    Ok(PathBundle {
        model: model.clone(),
        grid: *grid,
        count,
        law,
        dw,
        dn,
    })
}

/// The random stream of path `path` under root seed `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// JSON model/grid description `{drift, sigma, marks: [{x, lambda}], T, steps}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub drift: f64,
    pub sigma: f64,
    #[serde(default)]
    pub marks: Vec<Mark>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
}

impl ModelConfig {
    pub fn build(&self) -> Result<(LevyModel, TimeGrid)> {
        Ok((
            LevyModel::new(self.drift, self.sigma, self.marks.clone())?,
            TimeGrid::new(self.horizon, self.steps)?,
        ))
    }

    pub fn from_parts(model: &LevyModel, grid: &TimeGrid) -> Self {
        Self {
            drift: model.drift(),
            sigma: model.sigma(),
            marks: model.marks().to_vec(),
            horizon: grid.horizon(),
            steps: grid.steps(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(drift: f64, sigma: f64, marks: &[(f64, f64)]) -> LevyModel {
        LevyModel::new(
            drift,
            sigma,
            marks.iter().map(|&(x, l)| Mark::new(x, l)).collect(),
        )
        .unwrap()
    }

    fn mean_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(LevyModel::new(0.0, -1.0, vec![]).is_err());
        assert!(LevyModel::new(0.0, 1.0, vec![Mark::new(0.0, 1.0)]).is_err());
        assert!(LevyModel::new(0.0, 1.0, vec![Mark::new(1.0, 0.0)]).is_err());
        assert!(LevyModel::new(0.0, 1.0, vec![Mark::new(1.0, 1.0), Mark::new(1.0, 2.0)]).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 3).is_err());
    }

    #[test]
    fn pure_drift_is_deterministic() {
        let m = model(1.0, 0.0, &[]);
        for steps in [1, 7, 50] {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let b = simulate_paths(&m, &grid, 20, 3).unwrap();
            for p in 0..20 {
                assert!((b.terminal_state(p) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn poisson_mean_count() {
        let m = model(0.0, 0.0, &[(2.0, 1.0)]);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let b = simulate_paths(&m, &grid, 100_000, 11).unwrap();
        let counts: Vec<f64> = (0..b.count()).map(|p| b.total_counts(p)[0] as f64).collect();
        let (mean, se) = mean_se(&counts);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn mean_compensates_only_small_marks() {
        let m = model(0.5, 1.0, &[(0.5, 2.0), (3.0, 0.1)]);
        assert!((m.mean(1.0) - 0.8).abs() < 1e-15);
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let b = simulate_paths(&m, &grid, 100_000, 5).unwrap();
        let xs: Vec<f64> = (0..b.count()).map(|p| b.terminal_state(p)).collect();
        let (mean, se) = mean_se(&xs);
        assert!((mean - 0.8).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn path_streams_do_not_depend_on_count() {
        let m = model(0.1, 0.7, &[(0.3, 1.5)]);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let small = simulate_paths(&m, &grid, 3, 99).unwrap();
        let large = simulate_paths(&m, &grid, 50, 99).unwrap();
        for p in 0..3 {
            for i in 0..8 {
                assert_eq!(small.dw(p, i), large.dw(p, i));
                assert_eq!(small.dn(p, i, 0), large.dn(p, i, 0));
            }
        }
    }

    #[test]
    fn lattice_law_needs_small_intensity() {
        let m = model(0.0, 0.0, &[(0.5, 20.0)]);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(matches!(
            simulate_paths_with(&m, &grid, 10, 1, IncrementLaw::Lattice),
            Err(Error::IntensityTooLarge { .. })
        ));
        assert!(simulate_paths(&m, &grid, 10, 1).is_ok());
        assert!(simulate_paths(&m, &grid, 0, 1).is_err());
    }

    #[test]
    fn truncation_examples() {
        let m = model(0.2, 1.0, &[(0.05, 1.0), (0.5, 1.0)]);
        assert_eq!(truncate_model(&m, 4).marks(), &[Mark::new(0.5, 1.0)]);
        assert_eq!(truncate_model(&m, 100), m);
        let b = model(0.0, 0.0, &[(-0.2, 3.0)]);
        assert_eq!(truncate_model(&b, 5), b);
    }

    #[test]
    fn norm_examples() {
        let one = model(0.0, 0.0, &[(1.0, 4.0)]);
        assert_eq!(levy_norm(&JumpVector(vec![0.0]), &one).unwrap(), 0.0);
        assert_eq!(levy_norm(&JumpVector(vec![3.0]), &one).unwrap(), 6.0);
        let two = model(0.0, 0.0, &[(1.0, 1.0), (2.0, 2.0)]);
        let n = levy_norm(&JumpVector(vec![1.0, 1.0]), &two).unwrap();
        assert!((n - 3f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            levy_norm(&JumpVector(vec![1.0]), &two),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"drift": 0.1, "sigma": 0.5, "marks": [{"x": 0.3, "lambda": 2.0}], "T": 1.0, "steps": 4}"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        let (m, g) = cfg.build().unwrap();
        assert_eq!(m.marks()[0], Mark::new(0.3, 2.0));
        assert_eq!(g.steps(), 4);
        assert_eq!(ModelConfig::from_parts(&m, &g), cfg);
    }

    #[test]
    fn csv_layout() {
        let m = model(0.0, 1.0, &[(0.5, 1.0), (2.0, 0.5)]);
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let b = simulate_paths(&m, &grid, 2, 0).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path,step,dW,dN_1,dN_2");
        assert_eq!(lines.len(), 1 + 4);
    }
}
