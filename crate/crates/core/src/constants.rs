//! Explicit stability constants, evaluated in log scale so nothing overflows.

use serde::Serialize;

use crate::error::{precondition, Result};
use crate::scalar::Real;

/// Default exponent of `τ` in the near-concavity estimate; the absolute value is not
/// pinned down, so it stays configurable.
pub const DEFAULT_OMEGA0: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremConstants<S> {
    pub tau: S,
    pub omega0: S,
    /// `τ / (16 |ln τ|)`.
    pub alpha_tau: S,
    /// `ln Q(τ)` with `Q = τ⁴ / (2^100 |ln τ|⁴)`.
    pub ln_q: S,
    /// `ln M(τ)` with `M = 10^40 (ω0 + 4) |ln τ|⁴ / τ⁴`.
    pub ln_m: S,
    /// `5/2 + ω0/8`; also used as the exponent `Θ` of `τ` in the bound.
    pub omega: S,
}

impl<S: Real> TheoremConstants<S> {
    pub fn new(tau: S) -> Result<Self> {
        Self::with_omega0(tau, S::lit(DEFAULT_OMEGA0))
    }

    pub fn with_omega0(tau: S, omega0: S) -> Result<Self> {
        if !(tau > S::zero() && tau <= S::lit(0.5)) {
            return Err(precondition(format!("tau must lie in (0, 1/2], got {tau}")));
        }
        if !(omega0 >= S::zero() && omega0.is_finite()) {
            return Err(precondition(format!(
                "omega0 must be finite and >= 0, got {omega0}"
            )));
        }
        let ln_tau = tau.ln();
        let ln_abs_ln_tau = ln_tau.abs().ln();
        let four = S::lit(4.0);
        Ok(Self {
            tau,
            omega0,
            alpha_tau: tau / (S::lit(16.0) * ln_tau.abs()),
            ln_q: four * ln_tau - S::lit(100.0) * S::LN_2() - four * ln_abs_ln_tau,
            ln_m: S::lit(40.0) * S::LN_10() + (omega0 + four).ln() + four * ln_abs_ln_tau
                - four * ln_tau,
            omega: S::lit(2.5) + omega0 / S::lit(8.0),
        })
    }

    pub fn q(&self) -> S {
        self.ln_q.exp()
    }

    /// May be `+inf` for tiny `τ`; use [`Self::ln_m`] for comparisons.
    pub fn m(&self) -> S {
        self.ln_m.exp()
    }

    pub fn log10_q(&self) -> S {
        self.ln_q / S::LN_10()
    }

    pub fn log10_m(&self) -> S {
        self.ln_m / S::LN_10()
    }

    pub fn theta(&self) -> S {
        self.omega
    }

    /// `log10(ε^Q / τ^Θ)`; `None` for `ε ≤ 0`.
    pub fn log10_bound(&self, eps: S) -> Option<S> {
        (eps > S::zero()).then(|| self.q() * eps.log10() - self.theta() * self.tau.log10())
    }

    /// `ε < e^{-M}`, compared as `ln ε < -M` without forming `e^{-M}`.
    pub fn hypothesis_satisfied(&self, eps: S) -> bool {
        eps > S::zero() && eps.ln() < -self.m()
    }

    /// Whether `e^{-M}` is above the smallest positive value of the scalar type.
    pub fn hypothesis_representable(&self) -> bool {
        let ln_smallest = S::min_positive_value().ln() + S::epsilon().ln();
        -self.m() > ln_smallest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_matches_closed_forms() {
        let c = TheoremConstants::<f64>::new(0.5).unwrap();
        let l = 2f64.ln();
        // Direct evaluation, independent of the log-scale route.
        let q = 0.5f64.powi(4) / (2f64.powi(100) * l.powi(4));
        let m = 1e40 * 5.0 * l.powi(4) / 0.5f64.powi(4);
        assert!((c.q() / q - 1.0).abs() < 1e-12);
        assert!((c.m() / m - 1.0).abs() < 1e-12);
        assert!((c.alpha_tau - 0.5 / (16.0 * l)).abs() < 1e-15);
        assert!((c.alpha_tau - 0.045).abs() < 1e-3);
        assert_eq!(c.omega, 2.625);
        assert!(c.log10_q() < -30.0);
        assert!(!c.hypothesis_representable());
        assert!(!c.hypothesis_satisfied(1e-300));
    }

    #[test]
    fn monotone_in_tau() {
        let taus: Vec<f64> = (1..=50).map(|k| k as f64 / 100.0).collect();
        let cs: Vec<_> = taus
            .iter()
            .map(|&t| TheoremConstants::<f64>::new(t).unwrap())
            .collect();
        for w in cs.windows(2) {
            assert!(w[1].ln_q > w[0].ln_q);
            assert!(w[1].ln_m < w[0].ln_m);
            assert!(!w[0].hypothesis_representable());
        }
    }

    #[test]
    fn bound_is_finite_in_log_scale() {
        let c = TheoremConstants::<f64>::new(1e-3).unwrap();
        let b = c.log10_bound(1e-3).unwrap();
        assert!(b.is_finite());
        assert!(c.log10_bound(0.0).is_none());
        assert!(TheoremConstants::<f64>::new(0.6).is_err());
    }
}
