//! Solution triplets `(Y, Z, U)` on a tree or on a path bundle.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the nodes of consecutive levels are linked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Indexing {
    /// Node `k` at level `i + 1` is a child of node `k / branching` at level `i`.
    Tree { branching: usize },
    /// One node per simulated path at every level.
    Paths { count: usize },
}

/// One time level. `z` and `u` are empty at the terminal level; `u` is stored
/// node-major with `num_marks` entries per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Probability of each node (tree) or `1/P` (paths).
    pub weights: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl Level {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn mean_y(&self) -> f64 {
        self.weights.iter().zip(&self.y).map(|(w, y)| w * y).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionGrid {
    indexing: Indexing,
    dt: f64,
    lambdas: Vec<f64>,
    levels: Vec<Level>,
}

/// Squared distances `E∫|ΔY|²ds`, `E∫|ΔZ|²ds`, `E∫Σ_j λ_j|ΔU_j|²ds`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct L2Distance {
    pub dy: f64,
    pub dz: f64,
    pub du: f64,
}

impl L2Distance {
    pub fn total(&self) -> f64 {
        self.dy + self.dz + self.du
    }
}

impl SolutionGrid {
    pub fn new(indexing: Indexing, dt: f64, lambdas: Vec<f64>, levels: Vec<Level>) -> Self {
        debug_assert!(levels.len() >= 2);
        Self {
            indexing,
            dt,
            lambdas,
            levels,
        }
    }

    pub fn indexing(&self) -> Indexing {
        self.indexing
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn num_marks(&self) -> usize {
        self.lambdas.len()
    }

    /// Number of time steps `N`; levels are `0..=N`.
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &Level {
        &self.levels[i]
    }

    /// `E[Y_0]`; on a tree this is the root value.
    pub fn y0(&self) -> f64 {
        self.levels[0].mean_y()
    }

    pub fn u_at(&self, level: usize, node: usize) -> &[f64] {
        let j = self.lambdas.len();
        &self.levels[level].u[node * j..(node + 1) * j]
    }

    pub fn parent(&self, node: usize) -> usize {
        match self.indexing {
            Indexing::Tree { branching } => node / branching,
            Indexing::Paths { .. } => node,
        }
    }

    /// `E sup_i |Y_i|²` along the tree paths (or simulated paths).
    pub fn e_sup_y2(&self) -> f64 {
        let mut running: Vec<f64> = self.levels[0].y.iter().map(|y| y * y).collect();
        for level in &self.levels[1..] {
            running = level
                .y
                .iter()
                .enumerate()
                .map(|(k, y)| running[self.parent(k)].max(y * y))
                .collect();
        }
        let last = self.levels.last().expect("at least two levels");
        last.weights.iter().zip(&running).map(|(w, m)| w * m).sum()
    }

    /// `E Σ_i dt |Z_i|²`.
    pub fn z_norm2(&self) -> f64 {
        self.levels[..self.steps()]
            .iter()
            .map(|l| self.dt * l.weights.iter().zip(&l.z).map(|(w, z)| w * z * z).sum::<f64>())
            .sum()
    }

    /// `E Σ_i dt Σ_j λ_j |U_{i,j}|²`.
    pub fn u_norm2(&self) -> f64 {
        let j = self.lambdas.len();
        if j == 0 {
            return 0.0;
        }
        self.levels[..self.steps()]
            .iter()
            .map(|l| {
                self.dt
                    * l.weights
                        .iter()
                        .zip(l.u.chunks_exact(j))
                        .map(|(w, u)| w * u.iter().zip(&self.lambdas).map(|(v, lam)| lam * v * v).sum::<f64>())
                        .sum::<f64>()
            })
            .sum()
    }

    /// Largest `Y_self − Y_other` over all nodes of all levels.
    pub fn max_excess_over(&self, other: &SolutionGrid) -> Result<(f64, usize, usize)> {
        self.check_same_indexing(other)?;
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (i, (a, b)) in self.levels.iter().zip(&other.levels).enumerate() {
            for (k, (ya, yb)) in a.y.iter().zip(&b.y).enumerate() {
                let d = ya - yb;
                if d > best.0 || d.is_nan() {
                    best = (d, i, k);
                }
            }
        }
        Ok(best)
    }

    fn check_same_indexing(&self, other: &SolutionGrid) -> Result<()> {
        if self.indexing != other.indexing {
            return Err(Error::MismatchedIndexing(format!(
                "{:?} vs {:?}",
                self.indexing, other.indexing
            )));
        }
        if self.levels.len() != other.levels.len() {
            return Err(Error::MismatchedIndexing(format!(
                "{} vs {} levels",
                self.levels.len(),
                other.levels.len()
            )));
        }
        if (self.dt - other.dt).abs() > 1e-15 * self.dt.abs().max(1.0) {
            return Err(Error::MismatchedIndexing(format!("dt {} vs {}", self.dt, other.dt)));
        }
        if self.lambdas.len() != other.lambdas.len() {
            return Err(Error::MismatchedIndexing(format!(
                "{} vs {} marks",
                self.lambdas.len(),
                other.lambdas.len()
            )));
        }
        for (i, (a, b)) in self.levels.iter().zip(&other.levels).enumerate() {
            if a.len() != b.len() {
                return Err(Error::MismatchedIndexing(format!(
                    "level {i}: {} vs {} nodes",
                    a.len(),
                    b.len()
                )));
            }
        }
        Ok(())
    }

    /// CSV with columns `level, node, Y, Z, U_1..U_J`; `Z` and `U` are blank at the
    /// terminal level.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let j = self.lambdas.len();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["level".to_string(), "node".into(), "Y".into(), "Z".into()];
        header.extend((1..=j).map(|k| format!("U_{k}")));
        w.write_record(&header)?;
        for (i, level) in self.levels.iter().enumerate() {
            let terminal = level.z.is_empty();
            for (k, y) in level.y.iter().enumerate() {
                let mut rec = vec![i.to_string(), k.to_string(), y.to_string()];
                if terminal {
                    rec.extend(std::iter::repeat_n(String::new(), 1 + j));
                } else {
                    rec.push(level.z[k].to_string());
                    rec.extend(self.u_at(i, k).iter().map(|v| v.to_string()));
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical `(E∫|ΔY|², E∫|ΔZ|², E∫‖ΔU‖²)` over the levels `0..N−1`, weighted by
/// the node weights of `a`.
pub fn l2_distance(a: &SolutionGrid, b: &SolutionGrid) -> Result<L2Distance> {
    a.check_same_indexing(b)?;
    let j = a.lambdas.len();
    let mut d = L2Distance::default();
    for (la, lb) in a.levels[..a.steps()].iter().zip(&b.levels) {
        for k in 0..la.len() {
            let w = la.weights[k] * a.dt;
            let dy = la.y[k] - lb.y[k];
            let dz = la.z[k] - lb.z[k];
            d.dy += w * dy * dy;
            d.dz += w * dz * dz;
            for m in 0..j {
                let du = la.u[k * j + m] - lb.u[k * j + m];
                d.du += w * a.lambdas[m] * du * du;
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(y_shift: f64) -> SolutionGrid {
        let lv = |n: usize, terminal: bool| Level {
            weights: vec![1.0 / n as f64; n],
            y: (0..n).map(|k| k as f64 + y_shift).collect(),
            z: if terminal { vec![] } else { vec![0.5; n] },
            u: if terminal { vec![] } else { vec![1.0; n] },
        };
        SolutionGrid::new(
            Indexing::Tree { branching: 2 },
            0.5,
            vec![2.0],
            vec![lv(1, false), lv(2, false), lv(4, true)],
        )
    }

    #[test]
    fn identical_solutions_have_zero_distance() {
        let a = binary(0.0);
        assert_eq!(l2_distance(&a, &a).unwrap(), L2Distance::default());
    }

    #[test]
    fn constant_offset_gives_c_squared_t() {
        let a = binary(0.0);
        let b = binary(0.3);
        let d = l2_distance(&a, &b).unwrap();
        assert!((d.dy - 0.09 * 1.0).abs() < 1e-15);
        assert_eq!(d.dz, 0.0);
    }

    #[test]
    fn mismatched_indexing_is_rejected() {
        let a = binary(0.0);
        let mut b = binary(0.0);
        b.indexing = Indexing::Paths { count: 4 };
        assert!(matches!(l2_distance(&a, &b), Err(Error::MismatchedIndexing(_))));
    }

    #[test]
    fn sup_and_norms() {
        let a = binary(0.0);
        // Paths: leaves 0..3, parents at level 1 are 0,0,1,1, running max of y².
        let expected = (0.0 + 1.0 + 4.0 + 9.0) / 4.0;
        assert!((a.e_sup_y2() - expected).abs() < 1e-15);
        assert!((a.z_norm2() - 2.0 * 0.5 * 0.25).abs() < 1e-15);
        assert!((a.u_norm2() - 2.0 * 0.5 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        binary(0.0).write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "level,node,Y,Z,U_1");
        assert_eq!(lines[1], "0,0,0,0.5,1");
        assert_eq!(lines.last().unwrap(), &"2,3,3,,");
        assert_eq!(lines.len(), 1 + 7);
    }
}
