//! Sup-convolution, the deficit, interval sumsets and the AM-GM stability inequality.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, precondition, Result};
use crate::gridfn::{GridFunction, GridSpec, IntervalUnion};
use crate::scalar::Real;

/// How a source pair `(x_i, y_j)` is assigned to an output cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Landing {
    /// Round `(1-λ)i + λj` to the nearest output cell.
    #[default]
    Nearest,
    /// Keep only pairs whose combination lands on an output cell centre
    /// (within 1e-9 cells). Removes the half-cell snapping bias at the cost of
    /// fewer pairs; for λ = 1/2 on a shared grid these are the pairs with `i + j` even.
    CenterOnly,
}

#[derive(Debug, Clone)]
pub struct SupConvolution<S> {
    pub h: GridFunction<S>,
    /// Set when `f` or `g` has empty support; `h` is then identically zero.
    pub empty_input: bool,
}

fn check_lambda<S: Real>(lambda: S) -> Result<()> {
    if !(lambda > S::zero() && lambda < S::one()) {
        return Err(precondition(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    Ok(())
}

/// Puts `g` on a grid with the step of `f` (same origin).
fn on_common_step<S: Real>(f: &GridFunction<S>, g: &GridFunction<S>) -> Result<GridFunction<S>> {
    if f.step() == g.step() {
        return Ok(g.clone());
    }
    let cells = ((g.end() - g.origin()) / f.step())
        .ceil()
        .to_usize()
        .unwrap_or(0);
    g.resample(GridSpec {
        origin: g.origin(),
        step: f.step(),
        len: cells,
    })
}

/// `h(z) = max f(x)^{1-λ} g(y)^λ` over sampled pairs with `(1-λ)x + λy` landing in `z`'s cell.
///
/// The output grid starts at `(1-λ)·origin_f + λ·origin_g` with the step of `f`;
/// `g` is resampled first if its step differs.
pub fn sup_convolve<S: Real>(
    f: &GridFunction<S>,
    g: &GridFunction<S>,
    lambda: S,
    landing: Landing,
) -> Result<SupConvolution<S>> {
    check_lambda(lambda)?;
    let g = on_common_step(f, g)?;
    let lam = lambda.as_f64();
    let mu = 1.0 - lam;
    let step = f.step();
    let origin = S::lit(mu) * f.origin() + lambda * g.origin();
    let (nf, ng) = (f.len(), g.len());
    if nf == 0 || ng == 0 || f.support().is_none() || g.support().is_none() {
        log::warn!("sup-convolution with empty-support input; returning zero");
        let len = if nf == 0 || ng == 0 {
            0
        } else {
            (mu * (nf - 1) as f64 + lam * (ng - 1) as f64).round() as usize + 1
        };
        return Ok(SupConvolution {
            h: GridFunction::zeros(origin, step, len)?,
            empty_input: true,
        });
    }
    let len = (mu * (nf - 1) as f64 + lam * (ng - 1) as f64).round() as usize + 1;
    let one_minus = S::one() - lambda;
    let fa: Vec<S> = f.values().iter().map(|&v| v.powf(one_minus)).collect();
    let gb: Vec<S> = g.values().iter().map(|&v| v.powf(lambda)).collect();
    let (g_lo, g_hi) = g.support().expect("checked nonempty");

    let best = (0..nf)
        .into_par_iter()
        .filter(|&i| fa[i] > S::zero())
        .fold(
            || vec![S::zero(); len],
            |mut acc, i| {
                let base = mu * i as f64;
                let fi = fa[i];
                for j in g_lo..=g_hi {
                    let gj = gb[j];
                    if gj <= S::zero() {
                        continue;
                    }
                    let p = base + lam * j as f64;
                    let k = p.round();
                    if landing == Landing::CenterOnly && (p - k).abs() > 1e-9 {
                        continue;
                    }
                    let k = (k as usize).min(len - 1);
                    let v = fi * gj;
                    if v > acc[k] {
                        acc[k] = v;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![S::zero(); len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    if y > *x {
                        *x = y;
                    }
                }
                a
            },
        );
    Ok(SupConvolution {
        h: GridFunction::new(origin, step, best)?,
        empty_input: false,
    })
}

/// Canonical (smallest admissible) `h` with nearest-cell landing.
pub fn sup_convolution<S: Real>(
    f: &GridFunction<S>,
    g: &GridFunction<S>,
    lambda: S,
) -> Result<GridFunction<S>> {
    Ok(sup_convolve(f, g, lambda, Landing::Nearest)?.h)
}

/// `3·step·(‖f‖∞ + ‖g‖∞)`: the discretization slack for integral comparisons.
pub fn quadrature_tol<S: Real>(f: &GridFunction<S>, g: &GridFunction<S>) -> S {
    S::lit(3.0) * f.step().max(g.step()) * (f.sup_norm() + g.sup_norm())
}

#[derive(Debug, Clone)]
pub struct PlTriple<S> {
    pub f: GridFunction<S>,
    pub g: GridFunction<S>,
    pub h: GridFunction<S>,
    pub lambda: S,
    pub tau: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport<S> {
    pub pairs_checked: usize,
    pub violations: usize,
    /// Smallest `h / (f^{1-λ} g^λ)` seen over checked pairs (1 when nothing was checked).
    pub worst_ratio: S,
}

impl<S> ConditionReport<S> {
    pub fn satisfied(&self) -> bool {
        self.violations == 0
    }
}

impl<S: Real> PlTriple<S> {
    /// `tau` defaults to `min(λ, 1-λ)`.
    pub fn new(
        f: GridFunction<S>,
        g: GridFunction<S>,
        h: GridFunction<S>,
        lambda: S,
    ) -> Result<Self> {
        let tau = lambda.min(S::one() - lambda);
        Self::with_tau(f, g, h, lambda, tau)
    }

    pub fn with_tau(
        f: GridFunction<S>,
        g: GridFunction<S>,
        h: GridFunction<S>,
        lambda: S,
        tau: S,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if !(tau > S::zero() && tau <= S::lit(0.5)) {
            return Err(precondition(format!("tau must lie in (0, 1/2], got {tau}")));
        }
        if lambda < tau || lambda > S::one() - tau {
            return Err(precondition(format!(
                "lambda {lambda} outside [tau, 1 - tau] for tau {tau}"
            )));
        }
        Ok(Self {
            f,
            g,
            h,
            lambda,
            tau,
        })
    }

    /// Triple with `h` the sup-convolution of `f` and `g`.
    pub fn canonical(f: GridFunction<S>, g: GridFunction<S>, lambda: S) -> Result<Self> {
        let h = sup_convolution(&f, &g, lambda)?;
        Self::new(f, g, h, lambda)
    }

    pub fn deficit(&self) -> Result<DeficitReport<S>> {
        deficit(self)
    }

    pub fn quadrature_tol(&self) -> S {
        quadrature_tol(&self.f, &self.g)
    }

    /// Checks `h((1-λ)x+λy) ≥ f(x)^{1-λ} g(y)^λ` at every pair of positive cell
    /// centres. The `h` side is the max over the landing cell and its two
    /// neighbours, so snapping to the grid cannot cause a false negative.
    pub fn condition_report(&self) -> ConditionReport<S> {
        let (f, g, h) = (&self.f, &self.g, &self.h);
        let lambda = self.lambda;
        let one_minus = S::one() - lambda;
        let hs = h.step();
        let slack = S::one() - S::lit(1e-12);
        let hmax = |z: S| {
            h.value_at(z)
                .max(h.value_at(z - hs))
                .max(h.value_at(z + hs))
        };
        let gb: Vec<(S, S)> = (0..g.len())
            .filter(|&j| g.values()[j] > S::zero())
            .map(|j| (g.center(j), g.values()[j].powf(lambda)))
            .collect();
        let (checked, bad, worst) = (0..f.len())
            .into_par_iter()
            .filter(|&i| f.values()[i] > S::zero())
            .map(|i| {
                let x = f.center(i);
                let fa = f.values()[i].powf(one_minus);
                let mut bad = 0usize;
                let mut worst = S::one();
                for &(y, gv) in &gb {
                    let rhs = fa * gv;
                    let lhs = hmax(one_minus * x + lambda * y);
                    if lhs < rhs * slack {
                        bad += 1;
                    }
                    worst = worst.min(lhs / rhs);
                }
                (gb.len(), bad, worst)
            })
            .reduce(
                || (0, 0, S::one()),
                |a, b| (a.0 + b.0, a.1 + b.1, a.2.min(b.2)),
            );
        ConditionReport {
            pairs_checked: checked,
            violations: bad,
            worst_ratio: worst,
        }
    }

    pub fn condition_satisfied(&self) -> bool {
        self.condition_report().satisfied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeficitReport<S> {
    pub int_f: S,
    pub int_g: S,
    pub int_h: S,
    pub geo_mean: S,
    pub epsilon: S,
    pub a: S,
}

pub fn deficit<S: Real>(t: &PlTriple<S>) -> Result<DeficitReport<S>> {
    deficit_of(&t.f, &t.g, &t.h, t.lambda)
}

/// `ε = ∫h / ((∫f)^{1-λ} (∫g)^λ) - 1` from exact cell sums.
pub fn deficit_of<S: Real>(
    f: &GridFunction<S>,
    g: &GridFunction<S>,
    h: &GridFunction<S>,
    lambda: S,
) -> Result<DeficitReport<S>> {
    let (int_f, int_g, int_h) = (f.integral(), g.integral(), h.integral());
    for (name, v) in [("f", int_f), ("g", int_g)] {
        if !(v > S::zero() && v.is_finite()) {
            return Err(domain(format!(
                "integral of {name} must be positive and finite, got {v}"
            )));
        }
    }
    if !int_h.is_finite() {
        return Err(domain("integral of h is not finite"));
    }
    // Log form keeps the geometric mean finite for extreme integrals.
    let geo_mean = ((S::one() - lambda) * int_f.ln() + lambda * int_g.ln()).exp();
    Ok(DeficitReport {
        int_f,
        int_g,
        int_h,
        geo_mean,
        epsilon: int_h / geo_mean - S::one(),
        a: int_g / int_f,
    })
}

/// `αA + βB`; empty if either set is empty.
pub fn minkowski_sum<S: Real>(
    a: &IntervalUnion<S>,
    b: &IntervalUnion<S>,
    alpha: S,
    beta: S,
) -> IntervalUnion<S> {
    a.minkowski_sum(b, alpha, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreimanReport<S> {
    pub eps: S,
    pub hull_deficit_a: S,
    pub hull_deficit_b: S,
    /// `eps < min(|A|, |B|)`, beyond rounding.
    pub hypothesis_met: bool,
    /// Vacuously true when the hypothesis fails.
    pub conclusion_holds: bool,
}

/// Sumset stability check: small `|A+B| - |A| - |B|` should force both sets to
/// nearly fill their convex hulls.
pub fn freiman_check<S: Real>(a: &IntervalUnion<S>, b: &IntervalUnion<S>) -> FreimanReport<S> {
    let (ma, mb) = (a.measure(), b.measure());
    let eps = a.minkowski_sum(b, S::one(), S::one()).measure() - ma - mb;
    let (da, db) = (a.hull_deficit(), b.hull_deficit());
    let scale = [a.hull(), b.hull()]
        .into_iter()
        .flatten()
        .fold(S::one(), |m, (l, r)| m.max(l.abs()).max(r.abs()));
    let tol = S::lit(64.0) * S::epsilon() * scale;
    // Boundary cases `eps = min` that only pass through rounding count as unmet.
    let hypothesis_met = !a.is_empty() && !b.is_empty() && eps < ma.min(mb) - tol;
    FreimanReport {
        eps,
        hull_deficit_a: da,
        hull_deficit_b: db,
        hypothesis_met,
        conclusion_holds: !hypothesis_met || (da <= eps + tol && db <= eps + tol),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmGmReport<S> {
    pub lhs: S,
    pub rhs: S,
    pub holds: bool,
}

/// `(1-λ)a + λb - a^{1-λ} b^λ ≥ τ(√a - √b)²`.
pub fn amgm_stability<S: Real>(a: S, b: S, lambda: S, tau: S) -> Result<AmGmReport<S>> {
    if !(a > S::zero() && b > S::zero() && a.is_finite() && b.is_finite()) {
        return Err(domain(format!(
            "a and b must be positive and finite, got {a}, {b}"
        )));
    }
    if !(tau > S::zero() && tau <= S::lit(0.5)) || lambda < tau || lambda > S::one() - tau {
        return Err(precondition(format!(
            "need tau in (0, 1/2] and lambda in [tau, 1 - tau], got {lambda}, {tau}"
        )));
    }
    let lhs = (S::one() - lambda) * a + lambda * b - a.powf(S::one() - lambda) * b.powf(lambda);
    let d = a.sqrt() - b.sqrt();
    let rhs = tau * d * d;
    Ok(AmGmReport {
        lhs,
        rhs,
        holds: lhs >= rhs - S::lit(1e-12) * a.max(b),
    })
}
