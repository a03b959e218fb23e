use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Coefficients, ConditionFlags, GeneratorSpec, RhoFunction};
use crate::error::{Error, Result};
use crate::levy_model::{weighted_norm, LevyModel};

/// A catalog generator selected by name, with optional parameters.
///
/// ```json
/// {"name": "linear", "a": 0.5, "b": 0.3, "c": [-0.5, 0.5], "shift": 0.1}
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRef {
    pub name: String,
    /// `linear_y`, `sin_y`: slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// `linear`: coefficient of `y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// `linear`, `abs_z`: coefficient of `z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// `linear`: per-mark coefficients of `λ_j u_j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    /// `constant`: value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Constant added to the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

impl GeneratorRef {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = Some(shift);
        self
    }
}

/// Names accepted by [`generator_from_ref`].
pub const CATALOG_NAMES: &[&str] = &[
    "zero",
    "constant",
    "linear_y",
    "linear",
    "abs_z",
    "sin_y",
    "intro_example",
    "a_gamma_boundary",
    "a_gamma_violating",
];

/// Builds a catalog generator for `model`.
///
/// | name | f | notes |
/// |---|---|---|
/// | `zero` | 0 | |
/// | `constant` | `value` (default 1) | |
/// | `linear_y` | `k y` (default k = 1) | |
/// | `linear` | `a y + b z + Σ c_j λ_j u_j` | (Aγ) iff every `c_j ≥ −1` |
/// | `abs_z` | `b |z|` (default b = 0.5) | |
/// | `sin_y` | `k sin y` (default k = 1) | nonlinear in y |
/// | `intro_example` | `tanh(s^{−1/4} Σ_j λ_j u_j (|x_j| ∧ 1))` | `K₂ = β = s^{−1/4} ‖|x|∧1‖` |
/// | `a_gamma_boundary` | `−Σ_j λ_j u_j` | equality in (Aγ) |
/// | `a_gamma_violating` | `−2 Σ_j λ_j u_j` | violates (Aγ) |
pub fn generator_from_ref(r: &GeneratorRef, model: &LevyModel) -> Result<GeneratorSpec> {
    let lambdas = model.lambdas();
    let id = RhoFunction::identity;
    let g = match r.name.as_str() {
        "zero" => GeneratorSpec::new(
            "zero",
            &lambdas,
            |_, _, _, _| 0.0,
            Coefficients::constant(0.0, 0.0, 0.0, 0.0, 0.0, id()),
            ConditionFlags::ALL,
        ),
        "constant" => {
            let v = r.value.unwrap_or(1.0);
            GeneratorSpec::new(
                format!("constant({v})"),
                &lambdas,
                move |_, _, _, _| v,
                Coefficients::constant(v.abs(), 0.0, 0.0, 0.0, 0.0, id()),
                ConditionFlags::ALL,
            )
        }
        "linear_y" => {
            let k = r.k.unwrap_or(1.0);
            GeneratorSpec::new(
                format!("linear_y({k})"),
                &lambdas,
                move |_, y, _, _| k * y,
                Coefficients::constant(0.0, k.abs(), 0.0, k.max(0.0), 0.0, id()),
                ConditionFlags::ALL,
            )
        }
        "linear" => {
            let a = r.a.unwrap_or(0.0);
            let b = r.b.unwrap_or(0.0);
            let c = r.c.clone().unwrap_or_else(|| vec![0.0; lambdas.len()]);
            if c.len() != lambdas.len() {
                return Err(Error::DimensionMismatch {
                    expected: lambdas.len(),
                    got: c.len(),
                });
            }
            linear(&lambdas, a, b, c)
        }
        "abs_z" => {
            let b = r.b.unwrap_or(0.5);
            GeneratorSpec::new(
                format!("abs_z({b})"),
                &lambdas,
                move |_, _, z, _| b * z.abs(),
                Coefficients::constant(0.0, 0.0, b.abs(), 0.0, b.abs(), id()),
                ConditionFlags::ALL,
            )
        }
        "sin_y" => {
            let k = r.k.unwrap_or(1.0);
            GeneratorSpec::new(
                format!("sin_y({k})"),
                &lambdas,
                move |_, y, _, _| k * y.sin(),
                Coefficients::constant(0.0, k.abs(), 0.0, k.abs(), 0.0, id()),
                ConditionFlags::ALL,
            )
        }
        "intro_example" => intro_example(model),
        "a_gamma_boundary" => linear(&lambdas, 0.0, 0.0, vec![-1.0; lambdas.len()])
            .renamed("a_gamma_boundary"),
        "a_gamma_violating" => linear(&lambdas, 0.0, 0.0, vec![-2.0; lambdas.len()])
            .renamed("a_gamma_violating"),
        other => return Err(Error::UnknownName(format!("generator `{other}`"))),
    };
    Ok(match r.shift {
        Some(s) => g.shifted(s),
        None => g,
    })
}

/// `a y + b z + Σ_j c_j λ_j u_j`.
///
/// Growth: `K₁ = |a|`, `K₂ = max(|b|, ‖c‖_ν)`. Monotonicity with `ρ = id`:
/// `α = a⁺`, `β = max(|b|, ‖c‖_ν)`.
fn linear(lambdas: &[f64], a: f64, b: f64, c: Vec<f64>) -> GeneratorSpec {
    let c_norm = weighted_norm(&c, lambdas);
    let k2 = b.abs().max(c_norm);
    let weights: Vec<f64> = c.iter().zip(lambdas).map(|(c, l)| c * l).collect();
    let flags = ConditionFlags {
        satisfies_a_gamma: c.iter().all(|&cj| cj >= -1.0),
        ..ConditionFlags::ALL
    };
    GeneratorSpec::new(
        format!("linear({a},{b},{c:?})"),
        lambdas,
        move |_, y, z, u| a * y + b * z + weights.iter().zip(u).map(|(w, v)| w * v).sum::<f64>(),
        Coefficients::constant(0.0, a.abs(), k2, a.max(0.0), k2, RhoFunction::identity()),
        flags,
    )
}

/// Floor on the time argument of `s^{−1/4}`, so that evaluation at `s = 0` yields a
/// finite (if huge) kernel rather than `∞ · 0`.
const INTRO_TIME_FLOOR: f64 = f64::MIN_POSITIVE;

/// `f(s, u) = h(s, ∫ u κ(s, ·) dν)` with `h(s, v) = tanh(v)` and
/// `κ(s, x) = s^{−1/4}(|x| ∧ 1)`.
///
/// Since `sup|∂_v h| = 1`, Cauchy–Schwarz gives `|f| ≤ s^{−1/4} ‖|x|∧1‖ ‖u‖`, so
/// `K₂ = β = s^{−1/4} ‖|x|∧1‖_{L²(ν)}`, which is square integrable on `[0, T]`.
/// `∂_v h ≥ 0` makes (Aγ) hold with `γ = ∂_v h κ ≥ 0`.
fn intro_example(model: &LevyModel) -> GeneratorSpec {
    let lambdas = model.lambdas();
    let kernel: Vec<f64> = model.marks().iter().map(|m| m.x.abs().min(1.0)).collect();
    let kernel_norm = weighted_norm(&kernel, &lambdas);
    let weights: Vec<f64> = kernel.iter().zip(&lambdas).map(|(k, l)| k * l).collect();
    let k2: Arc<dyn Fn(&super::PathContext) -> f64 + Send + Sync> =
        Arc::new(move |ctx| ctx.t.max(INTRO_TIME_FLOOR).powf(-0.25) * kernel_norm);
    let coeffs = Coefficients {
        f: Arc::new(|_| 0.0),
        k1: Arc::new(|_| 0.0),
        k2: k2.clone(),
        beta: k2,
        alpha: Arc::new(|_| 0.0),
        rho: RhoFunction::identity(),
    };
    GeneratorSpec::new(
        "intro_example",
        &lambdas,
        move |ctx, _, _, u| {
            let v: f64 = weights.iter().zip(u).map(|(w, v)| w * v).sum();
            (ctx.t.max(INTRO_TIME_FLOOR).powf(-0.25) * v).tanh()
        },
        coeffs,
        ConditionFlags::ALL,
    )
}

/// The default-parameter catalog for `model`.
pub fn builtin_generators(model: &LevyModel) -> Vec<GeneratorSpec> {
    builtin_refs(model.num_marks())
        .iter()
        .map(|r| generator_from_ref(r, model).expect("catalog defaults are valid"))
        .collect()
}

/// The references behind [`builtin_generators`] for a model with `num_marks` marks.
pub fn builtin_refs(num_marks: usize) -> Vec<GeneratorRef> {
    let mut refs: Vec<GeneratorRef> = vec![
        GeneratorRef::named("zero"),
        GeneratorRef::named("constant"),
        GeneratorRef::named("linear_y"),
        GeneratorRef {
            name: "linear".into(),
            a: Some(0.5),
            b: Some(0.3),
            c: Some((0..num_marks).map(|i| if i % 2 == 0 { -0.5 } else { 0.5 }).collect()),
            ..Default::default()
        },
        GeneratorRef::named("abs_z"),
        GeneratorRef::named("sin_y"),
        GeneratorRef::named("intro_example"),
    ];
    if num_marks > 0 {
        refs.push(GeneratorRef::named("a_gamma_boundary"));
        refs.push(GeneratorRef::named("a_gamma_violating"));
    }
    refs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{check_a_gamma, check_growth, check_monotonicity, PathContext, SamplerConfig};
    use crate::levy_model::Mark;

    fn model() -> LevyModel {
        LevyModel::new(0.1, 1.0, vec![Mark::new(0.5, 2.0), Mark::new(-1.5, 0.5)]).unwrap()
    }

    fn cfg() -> SamplerConfig {
        SamplerConfig {
            samples: 3000,
            ..Default::default()
        }
    }

    #[test]
    fn zero_and_linear_y() {
        let m = model();
        let zero = generator_from_ref(&GeneratorRef::named("zero"), &m).unwrap();
        let counts = [1u32, 0];
        let ctx = PathContext::new(0.4, 1.0, -0.3, &counts);
        assert_eq!(zero.eval(&ctx, 3.0, -2.0, &[1.0, 5.0]), 0.0);
        let ly = generator_from_ref(&GeneratorRef::named("linear_y"), &m).unwrap();
        assert_eq!(ly.eval(&ctx, 2.0, 0.0, &[0.0, 0.0]), 2.0);
    }

    #[test]
    fn catalog_declarations_hold_on_samples() {
        let m = model();
        for g in builtin_generators(&m) {
            let growth = check_growth(&g, &cfg());
            assert!(growth.passed, "{}: {growth:?}", g.name());
            let mono = check_monotonicity(&g, &cfg());
            assert!(mono.passed, "{}: {mono:?}", g.name());
            let ag = check_a_gamma(&g, &cfg());
            assert_eq!(ag.passed, g.flags().satisfies_a_gamma, "{}: {ag:?}", g.name());
        }
    }

    #[test]
    fn linear_a_gamma_threshold() {
        let m = model();
        let ok = generator_from_ref(
            &GeneratorRef {
                name: "linear".into(),
                c: Some(vec![-1.0, 3.0]),
                ..Default::default()
            },
            &m,
        )
        .unwrap();
        assert!(check_a_gamma(&ok, &cfg()).passed);
        let bad = generator_from_ref(
            &GeneratorRef {
                name: "linear".into(),
                c: Some(vec![0.0, -1.2]),
                ..Default::default()
            },
            &m,
        )
        .unwrap();
        assert!(!bad.flags().satisfies_a_gamma);
        assert!(!check_a_gamma(&bad, &cfg()).passed);
    }

    #[test]
    fn intro_example_growth_scaling() {
        let m = model();
        let g = generator_from_ref(&GeneratorRef::named("intro_example"), &m).unwrap();
        let counts = [0u32, 0];
        let ctx = PathContext::origin(1.0 / 16.0, &counts);
        // s^{-1/4} = 2 at s = 1/16; ‖|x|∧1‖² = 2·0.25 + 0.5·1.
        let expected = 2.0 * (0.5f64 + 0.5).sqrt();
        assert!(((g.coeffs().k2)(&ctx) - expected).abs() < 1e-14);
        let zero_t = PathContext::origin(0.0, &counts);
        assert_eq!(g.eval(&zero_t, 0.0, 0.0, &[0.0, 0.0]), 0.0);
        assert_eq!(g.eval(&zero_t, 0.0, 0.0, &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn unknown_and_mismatched() {
        let m = model();
        assert!(matches!(
            generator_from_ref(&GeneratorRef::named("nope"), &m),
            Err(Error::UnknownName(_))
        ));
        let r = GeneratorRef {
            name: "linear".into(),
            c: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(matches!(generator_from_ref(&r, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn generator_ref_json() {
        let r: GeneratorRef =
            serde_json::from_str(r#"{"name": "linear", "a": 0.5, "c": [1.0, -1.0], "shift": 0.25}"#).unwrap();
        assert_eq!(r.a, Some(0.5));
        assert_eq!(r.shift, Some(0.25));
        let g = generator_from_ref(&r, &model()).unwrap();
        let counts = [0u32, 0];
        let ctx = PathContext::origin(0.5, &counts);
        assert!((g.eval(&ctx, 2.0, 0.0, &[1.0, 1.0]) - (1.0 + 2.0 - 0.5 + 0.25)).abs() < 1e-14);
    }
}
