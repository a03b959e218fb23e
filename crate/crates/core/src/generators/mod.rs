//! Generators `f(ω, s, y, z, u)` together with the coefficients of the growth
//! condition `|f| ≤ F + K₁|y| + K₂(|z| + ‖u‖)` and of the monotonicity condition
//! `(y−y')(f − f') ≤ α ρ(|y−y'|²) + β |y−y'| (|z−z'| + ‖u−u'‖)`.
//!
//! The dependence on `ω` is read access to the path state at time `s`
//! ([`PathContext`]), which makes every generator adapted by construction.

mod catalog;
mod checks;
mod truncation;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalog::{builtin_generators, builtin_refs, generator_from_ref, GeneratorRef, CATALOG_NAMES};
pub use checks::{
    check_a4, check_a_gamma, check_dominated, check_growth, check_monotonicity, A4Report,
    ConditionReport, SampledPoint, SamplerConfig, Witness, CHECK_SLACK,
};
pub use truncation::{clamp, project_ball, project_ball_slice, truncate_generator};

/// The part of the path visible to a generator at time `t`: the state `X_t`, the
/// Brownian motion `W_t` and the jump counts of every mark on `]0, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathContext<'a> {
    pub t: f64,
    pub x: f64,
    pub w: f64,
    pub counts: &'a [u32],
}

impl<'a> PathContext<'a> {
    pub fn new(t: f64, x: f64, w: f64, counts: &'a [u32]) -> Self {
        Self { t, x, w, counts }
    }

    /// The context at time `t` of the path that stays at the origin.
    pub fn origin(t: f64, counts: &'a [u32]) -> Self {
        Self {
            t,
            x: 0.0,
            w: 0.0,
            counts,
        }
    }
}

pub type DriverFn = dyn Fn(&PathContext, f64, f64, &[f64]) -> f64 + Send + Sync;
pub type CoefficientFn = dyn Fn(&PathContext) -> f64 + Send + Sync;
pub type TimeFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A nondecreasing, continuous, concave `ρ: [0, ∞) → [0, ∞)` with `ρ(0) = 0`.
#[derive(Clone)]
pub struct RhoFunction {
    name: String,
    description: String,
    value: Arc<TimeFn>,
}

impl fmt::Debug for RhoFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RhoFunction")
            .field("name", &self.name)
            .field("description", &self.description)
            .finish()
    }
}

/// Result of [`RhoFunction::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub zero_at_origin: bool,
    pub nondecreasing: bool,
    pub midpoint_concave: bool,
    /// First grid pair violating monotonicity or concavity, if any.
    pub witness: Option<(f64, f64)>,
}

impl RhoReport {
    pub fn passed(&self) -> bool {
        self.zero_at_origin && self.nondecreasing && self.midpoint_concave
    }
}

impl RhoFunction {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            value: Arc::new(value),
        }
    }

    /// `ρ(x) = x`, the classical monotonicity condition.
    pub fn identity() -> Self {
        Self::new("id", "rho(x) = x", |x| x)
    }

    /// `ρ(x) = √x`. Usable with the Bihari engine, but `ρ(x²)/x = 1` does not
    /// vanish at 0 and `∫_{0+} 1/ρ < ∞`, so it is not admissible in the monotonicity
    /// condition.
    pub fn sqrt() -> Self {
        Self::new("sqrt", "rho(x) = sqrt(x)", |x: f64| x.max(0.0).sqrt())
    }

    /// `ρ(x) = 1 − m^m` with `m = min(x, 1/e)`: grows like `−x ln x` at 0 and is
    /// constant beyond `1/e`.
    pub fn one_minus_power() -> Self {
        Self::new(
            "one_minus_power",
            "rho(x) = 1 - min(x,1/e)^min(x,1/e)",
            |x: f64| {
                let m = x.max(0.0).min((-1.0f64).exp());
                1.0 - m.powf(m)
            },
        )
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "id" | "identity" => Ok(Self::identity()),
            "sqrt" => Ok(Self::sqrt()),
            "one_minus_power" => Ok(Self::one_minus_power()),
            other => Err(Error::UnknownName(format!("rho `{other}`"))),
        }
    }

    pub fn catalog() -> Vec<Self> {
        vec![Self::identity(), Self::sqrt(), Self::one_minus_power()]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    /// Checks `ρ(0) = 0`, monotonicity and pairwise midpoint concavity on `grid`
    /// (which must be sorted ascending).
    pub fn validate(&self, grid: &[f64]) -> RhoReport {
        let slack = 1e-12;
        let zero_at_origin = self.eval(0.0).abs() <= slack;
        let vals: Vec<f64> = grid.iter().map(|&x| self.eval(x)).collect();
        let mut witness = None;
        let mut nondecreasing = true;
        for i in 1..grid.len() {
            if vals[i] < vals[i - 1] - slack {
                nondecreasing = false;
                witness.get_or_insert((grid[i - 1], grid[i]));
            }
        }
        let mut midpoint_concave = true;
        for i in 0..grid.len() {
            for k in (i + 1)..grid.len() {
                let mid = self.eval(0.5 * (grid[i] + grid[k]));
                if mid < 0.5 * (vals[i] + vals[k]) - slack {
                    midpoint_concave = false;
                    witness.get_or_insert((grid[i], grid[k]));
                }
            }
        }
        RhoReport {
            zero_at_origin,
            nondecreasing,
            midpoint_concave,
            witness,
        }
    }

    /// Default validation grid: 0, a geometric sweep towards 0 and a linear sweep to 4.
    pub fn default_grid() -> Vec<f64> {
        let mut g: Vec<f64> = (0..=30).rev().map(|k| 2f64.powi(-k)).collect();
        g.insert(0, 0.0);
        g.extend((1..=30).map(|i| 1.0 + i as f64 * 0.1));
        g
    }
}

/// Declared coefficients of a generator.
#[derive(Clone)]
pub struct Coefficients {
    pub f: Arc<CoefficientFn>,
    pub k1: Arc<CoefficientFn>,
    pub k2: Arc<CoefficientFn>,
    pub beta: Arc<CoefficientFn>,
    pub alpha: Arc<TimeFn>,
    pub rho: RhoFunction,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("rho", &self.rho)
            .finish_non_exhaustive()
    }
}

impl Coefficients {
    /// Coefficients that do not depend on time or path.
    pub fn constant(f: f64, k1: f64, k2: f64, alpha: f64, beta: f64, rho: RhoFunction) -> Self {
        Self {
            f: Arc::new(move |_| f),
            k1: Arc::new(move |_| k1),
            k2: Arc::new(move |_| k2),
            beta: Arc::new(move |_| beta),
            alpha: Arc::new(move |_| alpha),
            rho,
        }
    }

    pub fn growth_bound(&self, ctx: &PathContext, y: f64, z: f64, u_norm: f64) -> f64 {
        (self.f)(ctx) + (self.k1)(ctx) * y.abs() + (self.k2)(ctx) * (z.abs() + u_norm)
    }
}

/// Conditions a generator's author declares it to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub satisfies_a2: bool,
    pub satisfies_a3: bool,
    pub satisfies_a4: bool,
    pub satisfies_a_gamma: bool,
}

impl ConditionFlags {
    pub const ALL: Self = Self {
        satisfies_a2: true,
        satisfies_a3: true,
        satisfies_a4: true,
        satisfies_a_gamma: true,
    };
}

/// An evaluable generator with its declared coefficients and condition flags.
///
/// `lambdas` are the intensities of the Lévy measure the generator was built for;
/// every `u` handed to [`GeneratorSpec::eval`] has one entry per intensity.
#[derive(Clone)]
pub struct GeneratorSpec {
    name: String,
    lambdas: Arc<[f64]>,
    driver: Arc<DriverFn>,
    coeffs: Coefficients,
    flags: ConditionFlags,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("lambdas", &self.lambdas)
            .field("flags", &self.flags)
            .finish_non_exhaustive()
    }
}

impl GeneratorSpec {
    pub fn new(
        name: impl Into<String>,
        lambdas: &[f64],
        driver: impl Fn(&PathContext, f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
        coeffs: Coefficients,
        flags: ConditionFlags,
    ) -> Self {
        Self {
            name: name.into(),
            lambdas: lambdas.into(),
            driver: Arc::new(driver),
            coeffs,
            flags,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn num_marks(&self) -> usize {
        self.lambdas.len()
    }

    pub fn coeffs(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn flags(&self) -> ConditionFlags {
        self.flags
    }

    pub fn eval(&self, ctx: &PathContext, y: f64, z: f64, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.lambdas.len());
        (self.driver)(ctx, y, z, u)
    }

    /// `‖u‖_{L²(ν)}` for the generator's measure.
    pub fn u_norm(&self, u: &[f64]) -> f64 {
        crate::levy_model::weighted_norm(u, &self.lambdas)
    }

    /// `f + c`, with `F` raised by `|c|`.
    pub fn shifted(&self, c: f64) -> Self {
        if c == 0.0 {
            return self.clone();
        }
        let inner = self.driver.clone();
        let f = self.coeffs.f.clone();
        let coeffs = Coefficients {
            f: Arc::new(move |ctx| f(ctx) + c.abs()),
            ..self.coeffs.clone()
        };
        Self {
            name: format!("{}{:+}", self.name, c),
            lambdas: self.lambdas.clone(),
            driver: Arc::new(move |ctx, y, z, u| inner(ctx, y, z, u) + c),
            coeffs,
            flags: self.flags,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}
