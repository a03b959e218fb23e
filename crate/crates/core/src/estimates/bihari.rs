//! Backward Bihari–LaSalle inequality: if `y(t) ≤ c + ∫_t^T K(s) ρ(y(s)) ds` then
//! `y(t) ≤ G⁻¹(G(c) + ∫_t^T K)` with `G(x) = ∫_1^x dr/ρ(r)`.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::quadrature::integrate;
use crate::error::{Error, Result};
use crate::generators::RhoFunction;

/// Absolute tolerance for each dyadic piece of `G`.
const G_SEGMENT_TOL: f64 = 1e-13;
const K_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 1000;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BihariResult {
    /// `None` when `G(c) + ∫K` exceeds `sup G`.
    pub bound: Option<f64>,
    pub g_of_c: f64,
    pub integral_k: f64,
}

impl BihariResult {
    pub fn in_domain(&self) -> bool {
        self.bound.is_some()
    }

    /// The bound, or `+∞` when out of domain.
    pub fn value(&self) -> f64 {
        self.bound.unwrap_or(f64::INFINITY)
    }
}

/// `∫_a^b dr/ρ(r)` for `0 < a ≤ b`, split at the powers of two in between.
fn inverse_rho_integral(rho: &RhoFunction, a: f64, b: f64) -> f64 {
    debug_assert!(0.0 < a && a <= b);
    let mut total = 0.0;
    let mut cur = a;
    while cur < b {
        let next = (2f64.powi(cur.log2().floor() as i32 + 1)).min(b);
        let next = if next <= cur { b } else { next };
        total += integrate(|r| 1.0 / rho.eval(r), cur, next, G_SEGMENT_TOL).value;
        cur = next;
    }
    total
}

/// `G(x) = ∫_1^x dr/ρ(r)` (negative for `x < 1`).
pub fn big_g(rho: &RhoFunction, x: f64) -> f64 {
    if x >= 1.0 {
        inverse_rho_integral(rho, 1.0, x)
    } else {
        -inverse_rho_integral(rho, x, 1.0)
    }
}

/// Solves `G(x) = G(c) + increment` for `x ≥ c`, `increment ≥ 0`.
fn invert_from(rho: &RhoFunction, c: f64, increment: f64) -> Option<f64> {
    if increment == 0.0 {
        return Some(c);
    }
    // Work with Δ(x) = ∫_c^x dr/ρ, which avoids cancellation against G(c).
    let mut lo = c;
    let mut lo_val = 0.0;
    let mut hi = 2.0 * c;
    let mut hi_val = inverse_rho_integral(rho, c, hi);
    let mut doublings = 0;
    while hi_val < increment {
        doublings += 1;
        if doublings > MAX_DOUBLINGS || !hi.is_finite() {
            return None;
        }
        lo = hi;
        lo_val = hi_val;
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
        hi_val = lo_val + inverse_rho_integral(rho, lo, hi);
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mid_val = lo_val + inverse_rho_integral(rho, lo, mid);
        if mid_val < increment {
            lo = mid;
            lo_val = mid_val;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `G⁻¹(G(c) + ∫_t^T K)` with `∫K` supplied directly.
pub fn bihari_bound_from_integral(c: f64, integral_k: f64, rho: &RhoFunction) -> Result<BihariResult> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("c must be positive and finite, got {c}")));
    }
    if !(integral_k >= 0.0) {
        return Err(Error::InvalidArgument(format!("∫K must be >= 0, got {integral_k}")));
    }
    Ok(BihariResult {
        bound: invert_from(rho, c, integral_k),
        g_of_c: big_g(rho, c),
        integral_k,
    })
}

/// `G⁻¹(G(c) + ∫_t^T K(s) ds)`. `K` is integrated adaptively; any negative
/// evaluation is an error. For `K` with jumps use [`bihari_bound_with_breaks`]:
/// adaptive quadrature can step over a discontinuity without noticing.
pub fn bihari_bound(
    c: f64,
    k: impl Fn(f64) -> f64,
    rho: &RhoFunction,
    t: f64,
    horizon: f64,
) -> Result<BihariResult> {
    bihari_bound_with_breaks(c, k, &[], rho, t, horizon)
}

/// As [`bihari_bound`], integrating `K` separately between consecutive
/// `breaks` (points where `K` may jump) that fall inside `(t, T)`.
pub fn bihari_bound_with_breaks(
    c: f64,
    k: impl Fn(f64) -> f64,
    breaks: &[f64],
    rho: &RhoFunction,
    t: f64,
    horizon: f64,
) -> Result<BihariResult> {
    if !(t <= horizon) {
        return Err(Error::InvalidArgument(format!("need t <= T, got t = {t}, T = {horizon}")));
    }
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&b| t < b && b < horizon).collect();
    points.push(t);
    points.push(horizon);
    points.sort_by(f64::total_cmp);
    let negative = Cell::new(None);
    let checked = |s: f64| {
        let v = k(s);
        if v < 0.0 || v.is_nan() {
            negative.set(Some((s, v)));
        }
        v
    };
    let integral = points
        .windows(2)
        .map(|w| integrate(checked, w[0], w[1], K_TOL).value)
        .sum();
    if let Some((s, v)) = negative.get() {
        return Err(Error::InvalidArgument(format!("K({s}) = {v} is negative")));
    }
    bihari_bound_from_integral(c, integral, rho)
}

/// The Gronwall special case `c·e^{∫K}` (`ρ = id`).
pub fn gronwall_bound(c: f64, integral_k: f64) -> f64 {
    c * integral_k.exp()
}
