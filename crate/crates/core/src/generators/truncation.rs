//! Cut-off operators used to build bounded approximations `f^(n)` of a generator.

use std::sync::Arc;

use super::{Coefficients, GeneratorSpec};
use crate::levy_model::{weighted_norm, JumpVector, LevyModel};

/// `c_n(z) = min(max(−n, z), n)`.
pub fn clamp(z: f64, n: u32) -> f64 {
    let n = n as f64;
    z.max(-n).min(n)
}

/// `c̃_n(u)`: the projection of `u` onto the ball `{v : ‖v‖ ≤ n}` of `L²(ν)`.
pub fn project_ball(u: &JumpVector, n: u32, model: &LevyModel) -> JumpVector {
    JumpVector(project_ball_slice(u, n, &model.lambdas()))
}

pub fn project_ball_slice(u: &[f64], n: u32, lambdas: &[f64]) -> Vec<f64> {
    let norm = weighted_norm(u, lambdas);
    let radius = n as f64;
    if norm <= radius {
        u.to_vec()
    } else {
        let s = radius / norm;
        u.iter().map(|v| v * s).collect()
    }
}

/// The truncated generator
///
/// ```text
/// f̂^(n)(y, z, u) = f(y, c_n(z), c̃_n(u)),
/// f^(n) = sign(f̂^(n)) · B_n   if |f̂^(n)| > B_n,   f̂^(n) otherwise,
/// B_n = F∧n + (K₁∧n)|y| + (K₂∧n)(|c_n(z)| + ‖c̃_n(u)‖).
/// ```
///
/// The result carries `F∧n`, `K₁∧n`, `K₂∧n` and the unchanged `α`, `β`, `ρ`.
pub fn truncate_generator(g: &GeneratorSpec, n: u32) -> GeneratorSpec {
    let cap = n as f64;
    let inner = g.driver.clone();
    let lambdas: Arc<[f64]> = g.lambdas.clone();
    let (f, k1, k2) = (g.coeffs.f.clone(), g.coeffs.k1.clone(), g.coeffs.k2.clone());

    let driver = {
        let lambdas = lambdas.clone();
        let (f, k1, k2) = (f.clone(), k1.clone(), k2.clone());
        move |ctx: &super::PathContext, y: f64, z: f64, u: &[f64]| {
            let zc = clamp(z, n);
            let uc = project_ball_slice(u, n, &lambdas);
            let fhat = inner(ctx, y, zc, &uc);
            let bound = f(ctx).min(cap)
                + k1(ctx).min(cap) * y.abs()
                + k2(ctx).min(cap) * (zc.abs() + weighted_norm(&uc, &lambdas));
            if fhat.abs() > bound {
                fhat.signum() * bound
            } else {
                fhat
            }
        }
    };

    let coeffs = Coefficients {
        f: Arc::new(move |ctx| f(ctx).min(cap)),
        k1: Arc::new(move |ctx| k1(ctx).min(cap)),
        k2: Arc::new(move |ctx| k2(ctx).min(cap)),
        ..g.coeffs.clone()
    };

    GeneratorSpec {
        name: format!("{}^({n})", g.name),
        lambdas,
        driver: Arc::new(driver),
        coeffs,
        flags: g.flags,
    }
}
