//! The explicit a-priori, stability and weighted-`Y` bounds.

use serde::{Deserialize, Serialize};

use super::bihari::bihari_bound_from_integral;
use crate::error::{Error, Result};
use crate::generators::RhoFunction;

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBound {
    /// `c₁ = (5 + C_K) e^{(5 + C_K) C_K}`.
    pub c1: f64,
    /// Bound on `E sup_t |Y_t|²`.
    pub sup_y_bound: f64,
    /// Bound on `E∫|Z|² ds + E∫‖U‖² ds`.
    pub zu_bound: f64,
    /// Coefficients of `E|ξ|²` and `E I_F²` in `sup_y_bound + zu_bound`.
    pub xi_factor: f64,
    pub if_factor: f64,
    /// Smallest `C₁` with `max(xi_factor, if_factor) ≤ e^{C₁(1 + C_K)²}`.
    pub smallest_c1_exponent: f64,
}

/// Explicit a-priori bound for a solution with data `E|ξ|² = e_xi2`,
/// `E I_F² = e_if2`, `I_F = ∫_0^T F ds`, and coefficient budget
/// `C_K = sup ∫_0^T (K₁ + K₂²) ds`:
///
/// ```text
/// c₁           = (5 + C_K) e^{(5 + C_K) C_K}
/// E sup|Y|²    ≤ (2c₁ + 48c₁ e^{4C_K}) E|ξ|² + (2c₁ + (48c₁)² e^{8C_K}) E I_F²
/// E∫|Z|²+‖U‖² ≤ (1/12 + 4e^{4C_K}) E|ξ|² + (1/12 + 192c₁ e^{8C_K}) E I_F²
/// ```
pub fn apriori_bound(c_k: f64, e_xi2: f64, e_if2: f64) -> Result<AprioriBound> {
    non_negative("C_K", c_k)?;
    non_negative("E|xi|^2", e_xi2)?;
    non_negative("E I_F^2", e_if2)?;
    let c1 = (5.0 + c_k) * ((5.0 + c_k) * c_k).exp();
    let e4 = (4.0 * c_k).exp();
    let e8 = (8.0 * c_k).exp();
    let sup_xi = 2.0 * c1 + 48.0 * c1 * e4;
    let sup_if = 2.0 * c1 + (48.0 * c1).powi(2) * e8;
    let zu_xi = 1.0 / 12.0 + 4.0 * e4;
    let zu_if = 1.0 / 12.0 + 192.0 * c1 * e8;
    let xi_factor = sup_xi + zu_xi;
    let if_factor = sup_if + zu_if;
    Ok(AprioriBound {
        c1,
        sup_y_bound: sup_xi * e_xi2 + sup_if * e_if2,
        zu_bound: zu_xi * e_xi2 + zu_if * e_if2,
        xi_factor,
        if_factor,
        smallest_c1_exponent: xi_factor.max(if_factor).ln() / (1.0 + c_k).powi(2),
    })
}

/// The stability bound `h(a, b, δ)` for two solutions with `a = ∫_0^T α'`,
/// `b = ‖∫_0^T β'²‖_∞` and `δ = E|Δξ|² + 2E∫|ΔY||Δf| ds`:
///
/// ```text
/// H = G⁻¹(G(e^{4b} δ) + 2e^{4b} a)
/// h = 2e^{4b} δ + (2e^{4b} a + 1)(H + ρ(H))
/// ```
///
/// `h(a, b, 0) = 0`; `+∞` when `H` leaves the range of `G`.
pub fn stability_bound(a: f64, b: f64, delta: f64, rho: &RhoFunction) -> Result<f64> {
    non_negative("a", a)?;
    non_negative("b", b)?;
    non_negative("delta", delta)?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    let e4b = (4.0 * b).exp();
    let x0 = e4b * delta;
    if !x0.is_finite() {
        return Ok(f64::INFINITY);
    }
    let h = bihari_bound_from_integral(x0, 2.0 * e4b * a, rho)?.value();
    Ok(2.0 * e4b * delta + (2.0 * e4b * a + 1.0) * (h + rho.eval(h)))
}

/// `E∫_0^T H |Y_s|² ds ≤ e^{2C_K} E[∫H ds |ξ|²] + 2e^{2C_K} ‖∫H ds · I_F‖₂ ‖Y‖_{S²}`.
pub fn weighted_y_bound(int_h_xi2: f64, int_h_if_norm: f64, y_s2_norm: f64, c_k: f64) -> Result<f64> {
    non_negative("E[∫H |xi|^2]", int_h_xi2)?;
    non_negative("‖∫H I_F‖", int_h_if_norm)?;
    non_negative("‖Y‖_S2", y_s2_norm)?;
    non_negative("C_K", c_k)?;
    let e = (2.0 * c_k).exp();
    Ok(e * int_h_xi2 + 2.0 * e * int_h_if_norm * y_s2_norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apriori_at_zero_budget() {
        let b = apriori_bound(0.0, 1.0, 0.0).unwrap();
        assert_eq!(b.c1, 5.0);
        assert_eq!(b.sup_y_bound, 250.0);
        let b = apriori_bound(0.0, 0.0, 1.0).unwrap();
        assert_eq!(b.sup_y_bound, 57610.0);
        let z = apriori_bound(0.7, 0.0, 0.0).unwrap();
        assert_eq!((z.sup_y_bound, z.zu_bound), (0.0, 0.0));
        assert!(apriori_bound(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn apriori_is_monotone() {
        let grid = [0.0, 0.1, 0.5, 1.0, 2.0];
        for &c in &grid {
            for &x in &grid {
                for &f in &grid {
                    let b = apriori_bound(c, x, f).unwrap();
                    for (dc, dx, df) in [(0.1, 0.0, 0.0), (0.0, 0.1, 0.0), (0.0, 0.0, 0.1)] {
                        let b2 = apriori_bound(c + dc, x + dx, f + df).unwrap();
                        assert!(b2.sup_y_bound >= b.sup_y_bound && b2.zu_bound >= b.zu_bound);
                    }
                }
            }
        }
    }

    #[test]
    fn smallest_exponent_reproduces_factor() {
        let b = apriori_bound(0.3, 1.0, 1.0).unwrap();
        let factor = (b.smallest_c1_exponent * 1.3f64.powi(2)).exp();
        assert!((factor - b.xi_factor.max(b.if_factor)).abs() < 1e-9 * factor);
    }

    #[test]
    fn stability_identity_closed_form() {
        let (a, b, d): (f64, f64, f64) = (0.3, 0.2, 0.05);
        let e4b = (4.0 * b).exp();
        let h = e4b * d * (2.0 * e4b * a).exp();
        let expected = 2.0 * e4b * d + (2.0 * e4b * a + 1.0) * 2.0 * h;
        let got = stability_bound(a, b, d, &RhoFunction::identity()).unwrap();
        assert!((got - expected).abs() < 1e-8 * expected);
    }

    #[test]
    fn stability_zero_and_monotone() {
        for rho in RhoFunction::catalog() {
            assert_eq!(stability_bound(1.0, 1.0, 0.0, &rho).unwrap(), 0.0);
            let mut prev = 0.0;
            for k in 1..30 {
                let v = stability_bound(0.5, 0.1, k as f64 * 0.05, &rho).unwrap();
                assert!(v >= prev, "{}", rho.name());
                prev = v;
            }
        }
    }

    #[test]
    fn weighted_examples() {
        assert_eq!(weighted_y_bound(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(weighted_y_bound(1.0, 1.0, 1.0, 0.0).unwrap(), 3.0);
        let one = weighted_y_bound(0.5, 0.7, 1.0, 0.2).unwrap();
        let two = weighted_y_bound(0.5, 0.7, 2.0, 0.2).unwrap();
        let first = weighted_y_bound(0.5, 0.0, 0.0, 0.2).unwrap();
        assert!(((two - first) - 2.0 * (one - first)).abs() < 1e-14);
    }
}
