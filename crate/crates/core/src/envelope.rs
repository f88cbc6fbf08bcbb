//! Concave and convex envelopes of sampled profiles, monotonization, and the
//! three- and four-point inequality scans.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::profiles::LevelProfile;
use crate::scalar::Real;

/// A function sampled on an increasing abscissa grid, linear between samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledFn<S> {
    pub t: Vec<S>,
    pub values: Vec<S>,
}

impl<S: Real> SampledFn<S> {
    pub fn new(t: Vec<S>, values: Vec<S>) -> Result<Self> {
        if t.len() != values.len() {
            return Err(domain("abscissae and values differ in length"));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(domain("abscissae must be strictly increasing"));
        }
        Ok(Self { t, values })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn max_second_difference(&self) -> S {
        second_differences(&self.t, &self.values).fold(S::neg_infinity(), S::max)
    }

    pub fn min_second_difference(&self) -> S {
        second_differences(&self.t, &self.values).fold(S::infinity(), S::min)
    }
}

/// Divided second differences scaled by the local spacing, so a uniform grid
/// gives plain `v[i-1] - 2v[i] + v[i+1]`.
fn second_differences<'a, S: Real>(t: &'a [S], v: &'a [S]) -> impl Iterator<Item = S> + 'a {
    (1..t.len().saturating_sub(1)).map(move |i| {
        let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        let s0 = (v[i] - v[i - 1]) / h0;
        let s1 = (v[i + 1] - v[i]) / h1;
        (s1 - s0) * (h0 + h1) / S::lit(2.0)
    })
}

fn cross<S: Real>(o: (S, S), a: (S, S), b: (S, S)) -> S {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Upper hull vertices of points sorted by abscissa (monotone chain).
fn upper_hull<S: Real>(pts: &[(S, S)]) -> Vec<(S, S)> {
    let mut hull: Vec<(S, S)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) >= S::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Evaluates the polyline through `verts` at `x`, extending the end segments linearly.
fn polyline<S: Real>(verts: &[(S, S)], x: S) -> S {
    if verts.len() == 1 {
        return verts[0].1;
    }
    let seg = verts
        .partition_point(|v| v.0 <= x)
        .clamp(1, verts.len() - 1);
    let (a, b) = (verts[seg - 1], verts[seg]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

fn valid_points<S: Real>(t: &[S], psi: &[S], valid: &[bool]) -> Result<Vec<(S, S)>> {
    if t.len() != psi.len() || t.len() != valid.len() {
        return Err(domain("grid, samples and mask differ in length"));
    }
    let pts: Vec<(S, S)> = (0..t.len())
        .filter(|&i| valid[i])
        .map(|i| (t[i], psi[i]))
        .collect();
    if pts.len() < 2 {
        return Err(domain(format!(
            "envelope needs at least 2 valid points, got {}",
            pts.len()
        )));
    }
    if pts.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(domain("grid must be strictly increasing"));
    }
    Ok(pts)
}

/// Smallest concave function above `psi` at the valid points: the upper hull of
/// those points, evaluated on the whole grid (linear beyond the end vertices).
pub fn least_concave_majorant<S: Real>(t: &[S], psi: &[S], valid: &[bool]) -> Result<SampledFn<S>> {
    let hull = upper_hull(&valid_points(t, psi, valid)?);
    let values = t.iter().map(|&x| polyline(&hull, x)).collect();
    SampledFn::new(t.to_vec(), values)
}

/// Largest convex function below `psi` at the valid points.
pub fn greatest_convex_minorant<S: Real>(
    t: &[S],
    psi: &[S],
    valid: &[bool],
) -> Result<SampledFn<S>> {
    let neg: Vec<S> = psi.iter().map(|&v| -v).collect();
    let mut out = least_concave_majorant(t, &neg, valid)?;
    out.values.iter_mut().for_each(|v| *v = -*v);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Nonincreasing,
    Nondecreasing,
}

/// Makes a concave function monotone by flattening it at its max on the side
/// that would break the requested direction. Concavity is preserved.
pub fn monotonize<S: Real>(env: &SampledFn<S>, direction: Direction) -> SampledFn<S> {
    let mut out = env.clone();
    let Some(m) = argext(&env.values, |a, b| a > b) else {
        return out;
    };
    let top = env.values[m];
    match direction {
        Direction::Nonincreasing => out.values[..m].iter_mut().for_each(|v| *v = top),
        Direction::Nondecreasing => out.values[m + 1..].iter_mut().for_each(|v| *v = top),
    }
    out
}

/// Dual of [`monotonize`] for convex functions: flattens at the min.
pub fn monotonize_convex<S: Real>(env: &SampledFn<S>, direction: Direction) -> SampledFn<S> {
    let mut out = env.clone();
    let Some(m) = argext(&env.values, |a, b| a < b) else {
        return out;
    };
    let bottom = env.values[m];
    match direction {
        Direction::Nondecreasing => out.values[..m].iter_mut().for_each(|v| *v = bottom),
        Direction::Nonincreasing => out.values[m + 1..].iter_mut().for_each(|v| *v = bottom),
    }
    out
}

/// First index of the extreme value under `better`.
fn argext<S: Real>(v: &[S], better: impl Fn(S, S) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| better(x, v[b])) {
            best = Some(i);
        }
    }
    best
}

/// Convex lower boundary `𝔞` and concave upper boundary `𝔟` of a family of
/// nested intervals indexed by log-level `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopePair<S> {
    pub t: Vec<S>,
    pub lower: Vec<S>,
    pub upper: Vec<S>,
    /// `Σ |𝔞 - a|·ΔT` over the valid levels.
    pub fit_error_lower: S,
    pub fit_error_upper: S,
}

impl<S: Real> EnvelopePair<S> {
    /// Checks `lower ≤ upper` (up to rounding) and builds the pair without fitting.
    pub fn from_parts(t: Vec<S>, lower: Vec<S>, upper: Vec<S>) -> Result<Self> {
        if t.len() != lower.len() || t.len() != upper.len() || t.is_empty() {
            return Err(domain("envelope samples differ in length or are empty"));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(domain("log-level grid must be strictly increasing"));
        }
        for k in 0..t.len() {
            let tol = S::lit(1e-12) * (S::one() + lower[k].abs().max(upper[k].abs()));
            if lower[k] > upper[k] + tol {
                return Err(domain(format!(
                    "inconsistent envelopes at T = {}: lower {} > upper {}",
                    t[k], lower[k], upper[k]
                )));
            }
        }
        Ok(Self {
            t,
            lower,
            upper,
            fit_error_lower: S::zero(),
            fit_error_upper: S::zero(),
        })
    }

    /// Fits `𝔟` = monotone least concave majorant of the right endpoints and
    /// `𝔞` = monotone greatest convex minorant of the left endpoints, over the
    /// log-levels between the lowest and highest usable level.
    pub fn fit(p: &LevelProfile<S>) -> Result<Self> {
        let usable: Vec<usize> = p.usable().collect();
        let (Some(&lo), Some(&hi)) = (usable.first(), usable.last()) else {
            return Err(domain("profile has no usable level"));
        };
        let t: Vec<S> = p.levels[lo..=hi].iter().map(|x| x.ln()).collect();
        let mask: Vec<bool> = (lo..=hi)
            .map(|k| p.valid[k] && p.left[k].is_some())
            .collect();
        let fill = |v: &[Option<S>]| {
            v[lo..=hi]
                .iter()
                .map(|x| x.unwrap_or_else(S::zero))
                .collect::<Vec<S>>()
        };
        let (left, right) = (fill(&p.left), fill(&p.right));
        if usable.len() == 1 {
            // A single level: constant envelopes.
            return Self::from_parts(t, left, right);
        }
        let upper = monotonize(
            &least_concave_majorant(&t, &right, &mask)?,
            Direction::Nonincreasing,
        );
        let lower = monotonize_convex(
            &greatest_convex_minorant(&t, &left, &mask)?,
            Direction::Nondecreasing,
        );
        let dt = (t[t.len() - 1] - t[0]) / S::from_index(t.len() - 1);
        let err = |env: &[S], data: &[S]| -> S {
            (0..t.len())
                .filter(|&k| mask[k])
                .map(|k| (env[k] - data[k]).abs())
                .sum::<S>()
                * dt
        };
        let (fit_error_lower, fit_error_upper) =
            (err(&lower.values, &left), err(&upper.values, &right));
        let mut out = Self::from_parts(t, lower.values, upper.values)?;
        out.fit_error_lower = fit_error_lower;
        out.fit_error_upper = fit_error_upper;
        Ok(out)
    }

    pub fn t_lo(&self) -> S {
        self.t[0]
    }

    pub fn t_hi(&self) -> S {
        self.t[self.t.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport<S> {
    pub count: usize,
    /// Largest excess beyond `σ` and the snapping slack; 0 without violations.
    pub max_excess: S,
    /// Abscissae of the worst checked tuple (`[T1, T2, T12, T21]` for the
    /// four-point scan, `[R, S, T]` for the three-point scan); empty if nothing was checked.
    #[serde(rename = "worst_quadruple")]
    pub worst: Vec<S>,
    #[serde(skip)]
    pub checked: usize,
}

impl<S: Real> ViolationReport<S> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Per-thread accumulator: (checked, count, best excess, tie-break key, tuple).
type Acc<S> = (usize, usize, Option<(S, (usize, usize), Vec<S>)>);

fn merge<S: Real>(a: Acc<S>, b: Acc<S>) -> Acc<S> {
    let best = match (a.2, b.2) {
        (Some(x), Some(y)) => {
            // Larger excess wins; ties go to the smaller index pair so the
            // result does not depend on the parallel schedule.
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    };
    (a.0 + b.0, a.1 + b.1, best)
}

fn finish<S: Real>(acc: Acc<S>) -> ViolationReport<S> {
    let (checked, count, best) = acc;
    let (max_excess, worst) = match best {
        Some((e, _, w)) => (
            if count > 0 {
                e.max(S::zero())
            } else {
                S::zero()
            },
            w,
        ),
        None => (S::zero(), Vec::new()),
    };
    ViolationReport {
        count,
        max_excess,
        worst,
        checked,
    }
}

/// Largest jump between a sample and its neighbours: the cost of moving a
/// query point by up to one cell.
fn local_lipschitz<S: Real>(v: &[S], k: usize) -> S {
    let mut l = S::zero();
    if k > 0 {
        l = l.max((v[k] - v[k - 1]).abs());
    }
    if k + 1 < v.len() {
        l = l.max((v[k + 1] - v[k]).abs());
    }
    l
}

fn snap(p: f64, n: usize) -> Option<usize> {
    let k = p.round();
    (k >= 0.0 && (k as usize) < n).then_some(k as usize)
}

fn float_tol<S: Real>(v: &[S]) -> S {
    let scale = v.iter().fold(S::one(), |m, x| m.max(x.abs()));
    S::lit(64.0) * S::epsilon() * scale
}

/// Scans `ψ(T1) + ψ(T2) ≤ ψ(T12) + ψ(T21) + σ` with
/// `T12 = (T1 + (1-λ)T2)/(2-λ)` and `T21 = (T2 + (1-λ)T1)/(2-λ)` over all
/// valid pairs of a uniform grid. The mid-combinations snap to the nearest
/// grid point, which must also be valid; each snap adds `|offset|` times the
/// local Lipschitz constant to `σ`.
pub fn four_point_check<S: Real>(
    t: &[S],
    psi: &[S],
    valid: &[bool],
    lambda: S,
    sigma: S,
) -> ViolationReport<S> {
    let n = t.len();
    assert!(
        psi.len() == n && valid.len() == n,
        "grid, samples and mask differ in length"
    );
    let lam = lambda.as_f64();
    let denom = 2.0 - lam;
    let tol = float_tol(psi);
    let acc = (0..n)
        .into_par_iter()
        .filter(|&i| valid[i])
        .map(|i| {
            let mut acc: Acc<S> = (0, 0, None);
            for j in i + 1..n {
                if !valid[j] {
                    continue;
                }
                let p12 = (i as f64 + (1.0 - lam) * j as f64) / denom;
                let p21 = (j as f64 + (1.0 - lam) * i as f64) / denom;
                let (Some(k12), Some(k21)) = (snap(p12, n), snap(p21, n)) else {
                    continue;
                };
                if !valid[k12] || !valid[k21] {
                    continue;
                }
                let slack = S::lit((p12 - k12 as f64).abs()) * local_lipschitz(psi, k12)
                    + S::lit((p21 - k21 as f64).abs()) * local_lipschitz(psi, k21);
                let excess = psi[i] + psi[j] - psi[k12] - psi[k21] - sigma - slack;
                let hit = excess > tol;
                let cand = (excess, (i, j), vec![t[i], t[j], t[k12], t[k21]]);
                acc = merge(acc, (1, usize::from(hit), Some(cand)));
            }
            acc
        })
        .reduce(|| (0, 0, None), merge);
    finish(acc)
}

/// Half-widths `(right - left)/2` of a profile, `None` on empty levels.
fn half_widths<S: Real>(p: &LevelProfile<S>) -> Vec<Option<S>> {
    (0..p.len())
        .map(|k| match (p.left[k], p.right[k]) {
            (Some(l), Some(r)) => Some((r - l) / S::lit(2.0)),
            _ => None,
        })
        .collect()
}

/// Scans `(1-λ)a(R) + λb(S) ≤ ((1-λ)a + λb)(T) + σ`, `T = (1-λ)R + λS`, where
/// `a`, `b` are the half-widths of the level sets of `f` and `g` on a common
/// uniform log-level grid. `T` snaps to the nearest grid level; all three
/// levels must be valid in their own profile and `R`, `S` nonempty.
pub fn three_point_check<S: Real>(
    a_profile: &LevelProfile<S>,
    b_profile: &LevelProfile<S>,
    combined: &LevelProfile<S>,
    lambda: S,
    sigma: S,
) -> ViolationReport<S> {
    let n = a_profile.len();
    assert!(
        b_profile.len() == n && combined.len() == n,
        "profiles must share the level grid"
    );
    let t = a_profile.log_levels();
    let (a, b) = (half_widths(a_profile), half_widths(b_profile));
    let mu = S::one() - lambda;
    let mix: Vec<S> = (0..n)
        .map(|k| mu * a[k].unwrap_or_else(S::zero) + lambda * b[k].unwrap_or_else(S::zero))
        .collect();
    let lam = lambda.as_f64();
    let tol = float_tol(&mix);
    let acc = (0..n)
        .into_par_iter()
        .filter(|&r| a_profile.valid[r] && a[r].is_some())
        .map(|r| {
            let mut acc: Acc<S> = (0, 0, None);
            for s in 0..n {
                let Some(bs) = b[s].filter(|_| b_profile.valid[s]) else {
                    continue;
                };
                let p = (1.0 - lam) * r as f64 + lam * s as f64;
                let Some(k) = snap(p, n) else { continue };
                if !combined.valid[k] || !a_profile.valid[k] || !b_profile.valid[k] {
                    continue;
                }
                let slack = S::lit((p - k as f64).abs()) * local_lipschitz(&mix, k);
                let lhs = mu * a[r].expect("filtered") + lambda * bs;
                let excess = lhs - mix[k] - sigma - slack;
                let hit = excess > tol;
                acc = merge(
                    acc,
                    (
                        1,
                        usize::from(hit),
                        Some((excess, (r, s), vec![t[r], t[s], t[k]])),
                    ),
                );
            }
            acc
        })
        .reduce(|| (0, 0, None), merge);
    finish(acc)
}
