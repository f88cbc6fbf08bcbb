//! Log-concavity certification, log-concave hulls, rebuilding functions from
//! level-set envelopes, shift alignment, and the end-to-end decomposition of a
//! near-extremal triple into log-concave approximants.

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{TheoremConstants, DEFAULT_OMEGA0};
use crate::envelope::{four_point_check, three_point_check, EnvelopePair, ViolationReport};
use crate::error::{domain, precondition, Result};
use crate::gridfn::{GridFunction, GridSpec};
use crate::plcore::{deficit, sup_convolve, DeficitReport, Landing, PlTriple};
use crate::profiles::{
    build_bubble, default_threshold, extract_profile, geometric_levels, good_levels, regularize,
    LevelProfile,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstTriple<S> {
    pub x: S,
    pub y: S,
    pub mid: S,
    /// `ln(mid-product) - ln(f(x) f(y))`; negative means the midpoint is too low.
    pub log_margin: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogConcavity<S> {
    pub log_concave: bool,
    pub contiguous_support: bool,
    pub pairs_checked: usize,
    pub worst: Option<WorstTriple<S>>,
}

/// Checks `f(m)² ≥ f(x) f(y) (1 - tol)` for every pair of positive cells `x < y`,
/// with `m` the midpoint cell (for an odd index gap, the two middle cells
/// `f(m-) f(m+)` stand in for `f(m)²`), and that the support has no internal zeros.
pub fn is_log_concave<S: Real>(f: &GridFunction<S>, tol: S) -> LogConcavity<S> {
    let Some((lo, hi)) = f.support() else {
        return LogConcavity {
            log_concave: true,
            contiguous_support: true,
            pairs_checked: 0,
            worst: None,
        };
    };
    let vals = f.values();
    let contiguous = vals[lo..=hi].iter().all(|&v| v > S::zero());
    if !contiguous {
        return LogConcavity {
            log_concave: false,
            contiguous_support: false,
            pairs_checked: 0,
            worst: None,
        };
    }
    let logs: Vec<S> = vals[lo..=hi].iter().map(|v| v.ln()).collect();
    let n = logs.len();
    let floor = (S::one() - tol).ln();
    let (checked, worst) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(S, usize, usize)> = None;
            for j in i + 2..n {
                let (m0, m1) = ((i + j) / 2, (i + j).div_ceil(2));
                let margin = logs[m0] + logs[m1] - logs[i] - logs[j];
                if best.is_none_or(|b| margin < b.0) {
                    best = Some((margin, i, j));
                }
            }
            (n.saturating_sub(i + 2), best)
        })
        .reduce(
            || (0, None),
            |a, b| {
                let best = match (a.1, b.1) {
                    (Some(x), Some(y)) => {
                        Some(if y.0 < x.0 || (y.0 == x.0 && (y.1, y.2) < (x.1, x.2)) {
                            y
                        } else {
                            x
                        })
                    }
                    (x, None) => x,
                    (None, y) => y,
                };
                (a.0 + b.0, best)
            },
        );
    let worst = worst.map(|(margin, i, j)| WorstTriple {
        x: f.center(lo + i),
        y: f.center(lo + j),
        mid: (f.center(lo + i) + f.center(lo + j)) / S::lit(2.0),
        log_margin: margin,
    });
    LogConcavity {
        log_concave: worst.is_none_or(|w| w.log_margin >= floor),
        contiguous_support: true,
        pairs_checked: checked,
        worst,
    }
}

/// Smallest log-concave function above `f` on the grid: `exp` of the upper hull
/// of `(x_i, ln f_i)` over positive cells, on the hull of the support.
pub fn log_concave_hull<S: Real>(f: &GridFunction<S>) -> GridFunction<S> {
    let Some((lo, hi)) = f.support() else {
        return f.clone();
    };
    let mut hull: Vec<(S, S)> = Vec::new();
    for i in lo..=hi {
        let v = f.values()[i];
        if v <= S::zero() {
            continue;
        }
        let p = (S::from_index(i), v.ln());
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0) >= S::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut values = vec![S::zero(); f.len()];
    let mut seg = 0;
    for (i, out) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let x = S::from_index(i);
        while seg + 1 < hull.len() - 1 && hull[seg + 1].0 <= x {
            seg += 1;
        }
        *out = if hull.len() == 1 {
            hull[0].1.exp()
        } else {
            let (a, b) = (hull[seg], hull[seg + 1]);
            (a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)).exp()
        };
        // Contact cells keep their exact value.
        if f.values()[i] > *out {
            *out = f.values()[i];
        }
    }
    GridFunction::new(f.origin(), f.step(), values).expect("hull values are finite")
}

/// `sup{T : v(T) > x}` for a nonincreasing polyline `v` on the increasing grid
/// `t`, continued linearly past the last sample (`+inf` if flat there);
/// `None` when even the first sample is `≤ x`.
fn crossing<S: Real>(t: &[S], v: &[S], x: S) -> Option<S> {
    if v[0] <= x {
        return None;
    }
    let n = v.len();
    let k = v.partition_point(|&y| y > x);
    if k == n {
        if n < 2 || v[n - 1] >= v[n - 2] {
            return Some(S::infinity());
        }
        let slope = (v[n - 2] - v[n - 1]) / (t[n - 1] - t[n - 2]);
        return Some(t[n - 1] + (v[n - 1] - x) / slope);
    }
    let (v0, v1) = (v[k - 1], v[k]);
    Some(t[k - 1] + (v0 - x) / (v0 - v1) * (t[k] - t[k - 1]))
}

/// Rebuilds the function on `grid` whose superlevel set at `t = e^T` is
/// `(𝔞(T), 𝔟(T))` for `T` in the envelope domain: the value at `x` is
/// `exp(min(T_a(x), T_b(x)))` with `T_b(x) = sup{T : 𝔟(T) > x}` and
/// `T_a(x) = sup{T : 𝔞(T) < x}`, capped at the top envelope level. Points
/// outside the bottom set, or whose level falls below `floor_level`, are zero.
pub fn from_envelopes<S: Real>(
    env: &EnvelopePair<S>,
    floor_level: S,
    grid: GridSpec<S>,
) -> Result<GridFunction<S>> {
    let top = env.t.last().map_or(S::zero(), |t| t.exp());
    from_envelopes_capped(env, floor_level, top, grid)
}

/// As [`from_envelopes`], but above the top envelope level the envelopes
/// continue along their last segments, up to `ceiling`. Both continuations
/// keep `𝔞` convex and `𝔟` concave, so the output stays log-concave.
pub fn from_envelopes_capped<S: Real>(
    env: &EnvelopePair<S>,
    floor_level: S,
    ceiling: S,
    grid: GridSpec<S>,
) -> Result<GridFunction<S>> {
    let n = env.t.len();
    if env.lower.len() != n || env.upper.len() != n || n == 0 {
        return Err(domain("envelope samples differ in length"));
    }
    for k in 0..n {
        let tol = S::lit(1e-12) * (S::one() + env.lower[k].abs().max(env.upper[k].abs()));
        if env.lower[k] > env.upper[k] + tol {
            return Err(domain(format!(
                "inconsistent envelopes at T = {}",
                env.t[k]
            )));
        }
    }
    if env.upper.windows(2).any(|w| w[1] > w[0]) || env.lower.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain(
            "envelopes must be monotone: lower nondecreasing, upper nonincreasing",
        ));
    }
    let neg_lower: Vec<S> = env.lower.iter().map(|&v| -v).collect();
    let ln_floor = if floor_level > S::zero() {
        floor_level.ln()
    } else {
        S::neg_infinity()
    };
    let ln_cap = env.t[n - 1].max(ceiling.ln());
    let values = (0..grid.len)
        .map(|i| {
            let x = grid.center(i);
            let tb = crossing(&env.t, &env.upper, x);
            let ta = crossing(&env.t, &neg_lower, -x);
            match (ta, tb) {
                (Some(a), Some(b)) => {
                    let t = a.min(b).min(ln_cap);
                    if t < ln_floor {
                        S::zero()
                    } else {
                        t.exp()
                    }
                }
                _ => S::zero(),
            }
        })
        .collect();
    GridFunction::from_spec(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alignment<S> {
    pub w: S,
    pub err: S,
}

/// Finds `w` minimizing `∫|a^λ f(x) - h(x - λw)|`: a coarse scan over shifts
/// that keep the cells aligned, an exhaustive scan around the best coarse
/// shift, then golden-section refinement below one cell.
pub fn align<S: Real>(
    f: &GridFunction<S>,
    h: &GridFunction<S>,
    lambda: S,
    a: S,
) -> Result<Alignment<S>> {
    if !(lambda > S::zero() && lambda < S::one()) {
        return Err(precondition(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    if !(f.integral() > S::zero() && h.integral() > S::zero()) {
        return Err(domain("alignment needs positive integrals"));
    }
    let af = f.scaled(a.powf(lambda));
    let h = if h.step() == f.step() {
        h.clone()
    } else {
        let cells = ((h.end() - h.origin()) / f.step())
            .ceil()
            .to_usize()
            .unwrap_or(0);
        h.resample(GridSpec {
            origin: h.origin(),
            step: f.step(),
            len: cells,
        })?
    };
    let (flo, fhi) = af.support().expect("positive integral");
    let (hlo, hhi) = h.support().expect("positive integral");
    let (fv, hv) = (af.values(), h.values());
    let step = f.step();
    // The shift `offset + m·step` puts h's cell j on f's cell j + m.
    let offset = f.origin() - h.origin();
    let cost = |m: i64| -> S {
        let mut acc = S::zero();
        let lo = (flo as i64).min(hlo as i64 + m);
        let hi = (fhi as i64).max(hhi as i64 + m);
        for i in lo..=hi {
            let a = if i >= 0 && (i as usize) < fv.len() {
                fv[i as usize]
            } else {
                S::zero()
            };
            let j = i - m;
            let b = if j >= 0 && (j as usize) < hv.len() {
                hv[j as usize]
            } else {
                S::zero()
            };
            acc += (a - b).abs();
        }
        acc * step
    };
    let m_lo = flo as i64 - hhi as i64 - 1;
    let m_hi = fhi as i64 - hlo as i64 + 1;
    let stride = (((fhi - flo + 1) + (hhi - hlo + 1)) / 256).max(1) as i64;
    let argmin = |ms: &mut dyn Iterator<Item = i64>| -> (i64, S) {
        ms.map(|m| (m, cost(m)))
            .fold(None, |best: Option<(i64, S)>, c| match best {
                Some(b) if b.1 <= c.1 => Some(b),
                _ => Some(c),
            })
            .expect("nonempty scan")
    };
    let (coarse, _) = argmin(&mut (m_lo..=m_hi).step_by(stride as usize));
    let (m_best, _) = argmin(&mut ((coarse - stride).max(m_lo)..=(coarse + stride).min(m_hi)));
    let s_grid = offset + S::lit(m_best as f64) * step;
    let exact = |s: S| af.l1_distance(&h.translated(s));
    let (s, err) = golden_min(exact, s_grid - step, s_grid + step, 40);
    let (s, err) = if err <= exact(s_grid) {
        (s, err)
    } else {
        (s_grid, exact(s_grid))
    };
    Ok(Alignment { w: s / lambda, err })
}

/// Golden-section search for a minimum on `[lo, hi]`.
fn golden_min<S: Real>(f: impl Fn(S) -> S, mut lo: S, mut hi: S, iters: usize) -> (S, S) {
    let r = S::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeConfig<S> {
    pub n_levels: usize,
    /// Cap on the levels fed to the three- and four-point checks.
    pub check_levels: usize,
    /// Relative floor (fraction of the sup norm); `None` means `max(ε, 1e-6)`.
    pub floor: Option<S>,
    /// Good-level threshold; `None` uses the deficit-scaled default.
    pub threshold: Option<S>,
    pub omega0: S,
    /// Landing rule of the sup-convolutions that build `h̄` and `h̃`.
    pub landing: Landing,
}

impl<S: Real> Default for DecomposeConfig<S> {
    fn default() -> Self {
        Self {
            n_levels: 4096,
            check_levels: 512,
            floor: None,
            threshold: None,
            omega0: S::lit(DEFAULT_OMEGA0),
            landing: Landing::Nearest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconstructionErrors<S> {
    pub f: S,
    pub g: S,
    pub h: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport<S> {
    pub w: S,
    pub a: S,
    pub epsilon: S,
    /// `∫|a^λ f - h̃(· - λw)| / ∫h`.
    pub err_f: S,
    /// `∫|a^{λ-1} g - h̃(· + (1-λ)w)| / ∫h`.
    pub err_g: S,
    /// `∫|h - h̃| / ∫h`.
    pub err_h: S,
    /// `log10(ε^Q / τ^Θ)`, `None` when `ε ≤ 0`.
    pub log10_bound: Option<S>,
    pub hypothesis_satisfied: bool,
    pub stage_flags: Vec<String>,
    /// `∫|f - f̃|/∫f`, `∫|g - g̃|/∫g`, `∫|h - h̃|/∫h` for the direct approximants.
    pub reconstruction: ReconstructionErrors<S>,
    /// `|(‖f‖∞/‖g‖∞)(‖g‖₁/‖f‖₁) - 1|`.
    pub sup_ratio: S,
    pub constants: TheoremConstants<S>,
}

impl<S: Real> StabilityReport<S> {
    pub fn total_error(&self) -> S {
        self.err_f + self.err_g + self.err_h
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Everything the pipeline builds, in the original (unnormalized) scale.
#[derive(Debug, Clone)]
pub struct Decomposition<S> {
    pub report: StabilityReport<S>,
    pub deficit: DeficitReport<S>,
    pub f_tilde: GridFunction<S>,
    pub g_tilde: GridFunction<S>,
    pub h_tilde: GridFunction<S>,
    pub f_bar: GridFunction<S>,
    pub g_bar: GridFunction<S>,
    pub h_bar: GridFunction<S>,
    pub envelope_f: EnvelopePair<S>,
    pub envelope_g: EnvelopePair<S>,
    pub three_point: ViolationReport<S>,
    pub four_point_f: ViolationReport<S>,
    pub four_point_g: ViolationReport<S>,
}

/// Profile endpoints are cell edges while values sit at cell centres; pulling
/// both envelopes in by just under half a cell lines the two up.
fn subsample<S: Real>(p: &LevelProfile<S>, stride: usize) -> LevelProfile<S> {
    let pick = |n: usize| (0..n).step_by(stride);
    LevelProfile {
        levels: pick(p.len()).map(|k| p.levels[k]).collect(),
        left: pick(p.len()).map(|k| p.left[k]).collect(),
        right: pick(p.len()).map(|k| p.right[k]).collect(),
        valid: pick(p.len()).map(|k| p.valid[k]).collect(),
        hull_deficit: pick(p.len()).map(|k| p.hull_deficit[k]).collect(),
        measure: pick(p.len()).map(|k| p.measure[k]).collect(),
        grid: p.grid,
        ceiling: p.ceiling,
    }
}

fn inset<S: Real>(mut env: EnvelopePair<S>, step: S) -> EnvelopePair<S> {
    let d = step / S::lit(2.0) * (S::one() - S::lit(1e-6));
    env.lower.iter_mut().for_each(|v| *v += d);
    env.upper.iter_mut().for_each(|v| *v -= d);
    env
}

/// Runs the decomposition: normalize, profile and regularize the level sets,
/// rebuild bubble functions, fit log-level envelopes, rebuild log-concave
/// `f̃`, `g̃`, take `h̃` as their sup-convolution, and align.
pub fn stability_decompose<S: Real>(
    t: &PlTriple<S>,
    config: &DecomposeConfig<S>,
) -> Result<Decomposition<S>> {
    let d = deficit(t)?;
    let mut flags = Vec::new();
    if !d.epsilon.is_finite() {
        return Err(domain("deficit is not finite"));
    }
    let eps = if d.epsilon < S::zero() {
        let rel_tol = t.quadrature_tol() / d.geo_mean;
        if -d.epsilon > rel_tol {
            return Err(precondition(format!(
                "deficit {} is negative beyond grid tolerance",
                d.epsilon
            )));
        }
        if -d.epsilon > S::lit(64.0) * S::epsilon() {
            flags.push("negative_deficit_clamped".to_string());
        }
        S::zero()
    } else {
        d.epsilon
    };
    let lambda = t.lambda;

    // Stage 1: unit integrals.
    let f = t.f.scaled(S::one() / d.int_f);
    let g = t.g.scaled(S::one() / d.int_g);
    let h = t.h.scaled(S::one() / d.geo_mean);
    let tn = PlTriple::with_tau(f.clone(), g.clone(), h.clone(), lambda, t.tau)?;
    let dn = deficit(&tn)?;
    let sup_ratio = ((f.sup_norm() / g.sup_norm()) - S::one()).abs();

    // Stage 2: level profiles on a shared geometric grid.
    let floor_rel = config.floor.unwrap_or_else(|| eps.max(S::lit(1e-6)));
    let top = f.sup_norm().max(g.sup_norm());
    let floor_abs = floor_rel * f.sup_norm().min(g.sup_norm());
    let levels = geometric_levels(floor_abs, top, config.n_levels.max(2))?;
    let threshold = config
        .threshold
        .unwrap_or_else(|| default_threshold(&tn, &dn));
    let good = good_levels(&tn, &levels, threshold);
    let mut pf = extract_profile(&f, &levels);
    let mut pg = extract_profile(&g, &levels);
    let ph = extract_profile(&h, &levels);
    let mask_f: Vec<bool> = (0..levels.len())
        .map(|k| good.mask[k] && !pf.is_level_empty(k))
        .collect();
    let mask_g: Vec<bool> = (0..levels.len())
        .map(|k| good.mask[k] && !pg.is_level_empty(k))
        .collect();
    for (p, mask, name) in [(&mut pf, mask_f, "f"), (&mut pg, mask_g, "g")] {
        if mask.iter().filter(|&&b| b).count() >= 2 {
            p.valid = mask;
        } else {
            flags.push(format!("good_levels_fallback_{name}"));
        }
    }
    let rf = regularize(&pf)?;
    let rg = regularize(&pg)?;
    let f_bar = build_bubble(&rf, floor_abs);
    let g_bar = build_bubble(&rg, floor_abs);
    let h_bar = sup_convolve(&f_bar, &g_bar, lambda, config.landing)?.h;

    // Stage 3: three- and four-point diagnostics in log-levels, quadratic in
    // the level count, so run on every `stride`-th level.
    let stride = levels.len().div_ceil(config.check_levels.max(2));
    let (cf, cg) = (subsample(&rf, stride), subsample(&rg, stride));
    let ch = subsample(&ph.clone().with_mask(good.mask.clone()), stride);
    let sigma3 = threshold;
    let three_point = three_point_check(&cf, &cg, &ch, lambda, sigma3);
    let (rf_full, rg_full) = (rf, rg);
    let (rf, rg) = (cf, cg);
    let tlog = rf.log_levels();
    let right = |p: &LevelProfile<S>| {
        p.right
            .iter()
            .map(|v| v.unwrap_or_else(S::zero))
            .collect::<Vec<_>>()
    };
    let sigma4 = S::lit(2.0) / lambda * threshold;
    let valid_f: Vec<bool> = (0..rf.len())
        .map(|k| rf.valid[k] && rf.right[k].is_some())
        .collect();
    let valid_g: Vec<bool> = (0..rg.len())
        .map(|k| rg.valid[k] && rg.right[k].is_some())
        .collect();
    let four_point_f = four_point_check(&tlog, &right(&rf), &valid_f, lambda, sigma4);
    let four_point_g = four_point_check(&tlog, &right(&rg), &valid_g, lambda, sigma4);
    if three_point.count > 0 {
        flags.push(format!("three_point_violations={}", three_point.count));
    }

    // Stage 4: envelopes and log-concave rebuilds.
    let (rf, rg) = (rf_full, rg_full);
    let envelope_f = inset(EnvelopePair::fit(&rf)?, f.step());
    let envelope_g = inset(EnvelopePair::fit(&rg)?, g.step());
    let f_tilde = from_envelopes_capped(&envelope_f, floor_abs, rf.ceiling, f.spec())?;
    let g_tilde = from_envelopes_capped(&envelope_g, floor_abs, rg.ceiling, g.spec())?;

    // Stage 5: h̃ from the approximants.
    let conv = sup_convolve(&f_tilde, &g_tilde, lambda, config.landing)?;
    if conv.empty_input {
        flags.push("empty_reconstruction".to_string());
    }
    let h_tilde = conv.h;

    // Stage 6: alignment; in the normalized scale a = 1.
    let al = align(&f, &h_tilde, lambda, S::one())?;
    let s = lambda * al.w;
    let one_plus = S::one() + dn.epsilon;
    let err_f = al.err / one_plus;
    let err_g = g.l1_distance(&h_tilde.translated(s - al.w)) / one_plus;
    let err_h = h.l1_distance(&h_tilde) / one_plus;

    let constants = TheoremConstants::with_omega0(t.tau, config.omega0)?;
    let report = StabilityReport {
        w: al.w,
        a: d.a,
        epsilon: d.epsilon,
        err_f,
        err_g,
        err_h,
        log10_bound: constants.log10_bound(d.epsilon),
        hypothesis_satisfied: constants.hypothesis_satisfied(d.epsilon),
        stage_flags: flags,
        reconstruction: ReconstructionErrors {
            f: f.l1_distance(&f_tilde),
            g: g.l1_distance(&g_tilde),
            h: h.l1_distance(&h_tilde) / one_plus,
        },
        sup_ratio,
        constants,
    };
    let gm = d.geo_mean;
    Ok(Decomposition {
        report,
        deficit: d,
        f_tilde: f_tilde.scaled(d.int_f),
        g_tilde: g_tilde.scaled(d.int_g),
        h_tilde: h_tilde.scaled(gm),
        f_bar: f_bar.scaled(d.int_f),
        g_bar: g_bar.scaled(d.int_g),
        h_bar: h_bar.scaled(gm),
        envelope_f,
        envelope_g,
        three_point,
        four_point_f,
        four_point_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plcore::sup_convolution;
    use crate::profiles::regularize;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    type G = GridFunction<f64>;

    fn gauss(step: f64) -> G {
        G::sample_window(-6.0, 6.0, step, |x| (-PI * x * x).exp()).unwrap()
    }

    #[test]
    fn log_concavity_examples() {
        assert!(is_log_concave(&gauss(1e-2), 1e-9).log_concave);
        let two = G::sample_window(0.0, 3.0, 0.01, |x| {
            if (1.0..2.0).contains(&x) {
                0.0
            } else {
                1.0
            }
        })
        .unwrap();
        let r = is_log_concave(&two, 1e-9);
        assert!(!r.log_concave && !r.contiguous_support);
        let e = G::sample_window(0.0, 1.0, 0.01, |x| (-x).exp()).unwrap();
        assert!(is_log_concave(&e, 1e-9).log_concave);
        let bimodal = G::sample_window(-3.0, 3.0, 0.01, |x| {
            (-PI * (x - 1.0).powi(2)).exp() + (-PI * (x + 1.0).powi(2)).exp()
        })
        .unwrap();
        let r = is_log_concave(&bimodal, 1e-9);
        assert!(!r.log_concave && r.contiguous_support);
        assert!(r.worst.unwrap().log_margin < 0.0);
    }

    #[test]
    fn hull_examples() {
        let g = gauss(1e-2);
        let hg = log_concave_hull(&g);
        assert!(hg.l1_distance(&g) < 1e-9);

        let step = 1e-3;
        let a = 5.0;
        let f = G::sample_window(-0.5, 2.0 * a + 1.5, step, |x| {
            if (0.0..1.0).contains(&x) || (2.0 * a..2.0 * a + 1.0).contains(&x) {
                (-x).exp()
            } else {
                0.0
            }
        })
        .unwrap();
        let hull = log_concave_hull(&f);
        let gap = hull.integral() - f.integral();
        assert!(
            (gap - ((-1f64).exp() - (-2.0 * a).exp())).abs() <= 2.0 * step,
            "{gap}"
        );
        assert!(hull.values().iter().zip(f.values()).all(|(h, f)| h >= f));

        let two = G::sample_window(0.0, 3.0, 0.01, |x| {
            if (1.0..2.0).contains(&x) {
                0.0
            } else {
                1.0
            }
        })
        .unwrap();
        assert!(log_concave_hull(&two).l1_distance(&G::indicator(0.0, 3.0, 0.01).unwrap()) < 1e-9);
        assert_eq!(
            log_concave_hull(&G::zeros(0.0, 1.0, 3).unwrap()).integral(),
            0.0
        );
    }

    #[test]
    fn constant_envelopes_give_indicator() {
        let t: Vec<f64> = (0..50).map(|k| -5.0 + 5.0 * k as f64 / 49.0).collect();
        let env = EnvelopePair::from_parts(t, vec![-1.0; 50], vec![1.0; 50]).unwrap();
        let spec = GridSpec {
            origin: -2.0,
            step: 0.01,
            len: 400,
        };
        let f = from_envelopes(&env, 0.0, spec).unwrap();
        assert!(f.l1_distance(&G::indicator(-1.0, 1.0, 0.01).unwrap()) < 1e-9);
    }

    #[test]
    fn sqrt_envelopes_give_gaussian() {
        let n = 20_001;
        let t: Vec<f64> = (0..n)
            .map(|k| -9.0 + 9.0 * k as f64 / (n - 1) as f64)
            .collect();
        let lower: Vec<f64> = t.iter().map(|&x| -(-x).sqrt()).collect();
        let upper: Vec<f64> = t.iter().map(|&x| (-x).sqrt()).collect();
        let env = EnvelopePair::from_parts(t, lower, upper).unwrap();
        let step = 1e-3;
        let spec = GridSpec {
            origin: -4.0,
            step,
            len: 8000,
        };
        let f = from_envelopes(&env, 0.0, spec).unwrap();
        let exact = G::sample(-4.0, step, 8000, |x| {
            if x.abs() < 3.0 {
                (-x * x).exp()
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(f.l1_distance(&exact) <= step, "{}", f.l1_distance(&exact));
        assert!(is_log_concave(&f, 1e-9).log_concave);
    }

    #[test]
    fn crossing_envelopes_rejected() {
        let env = EnvelopePair {
            t: vec![0.0, 1.0],
            lower: vec![0.0, 2.0],
            upper: vec![1.0, 1.0],
            fit_error_lower: 0.0,
            fit_error_upper: 0.0,
        };
        assert!(from_envelopes(
            &env,
            0.0,
            GridSpec {
                origin: 0.0,
                step: 0.1,
                len: 10
            }
        )
        .is_err());
    }

    #[test]
    fn gaussian_round_trip() {
        let step = 1e-3;
        let g = gauss(step);
        let levels = geometric_levels(1e-6, g.sup_norm(), 512).unwrap();
        let p = regularize(&extract_profile(&g, &levels)).unwrap();
        let env = EnvelopePair::fit(&p).unwrap();
        let back = from_envelopes(&env, 1e-6, g.spec()).unwrap();
        assert!(
            back.l1_distance(&g) <= 4.0 * step,
            "{}",
            back.l1_distance(&g)
        );
        assert!(is_log_concave(&back, 1e-9).log_concave);
    }

    #[test]
    fn align_examples() {
        let step = 1e-2;
        let h = gauss(step);
        let r = align(&h, &h, 0.5, 1.0).unwrap();
        assert!(r.w.abs() < 1e-9 && r.err < 1e-12);

        let f = h.shift_scale(3.0, 1.0);
        let r = align(&f, &h, 0.5, 1.0).unwrap();
        assert!((r.w - 6.0).abs() < 1e-9, "{}", r.w);
        assert!(r.err <= 2.0 * step * h.sup_norm());

        // Half-height copy shifted by a sub-cell amount; a^λ = 2 restores the height.
        let planted = -1.234;
        let f = G::sample_window(-8.0, 6.0, step, |x| {
            0.5 * (-PI * (x - planted).powi(2)).exp()
        })
        .unwrap();
        let r = align(&f, &h, 0.5, 4.0).unwrap();
        assert!((0.5 * r.w - planted).abs() <= 2.0 * step, "{}", r.w);
        // Without the height correction the objective is flat near the optimum;
        // only the attained value is pinned down.
        let r = align(&f, &h, 0.5, 1.0).unwrap();
        assert!(
            r.err <= f.l1_distance(&h.translated(planted)) + 1e-9,
            "{r:?}"
        );
    }

    #[test]
    fn decompose_equality_triple() {
        let step = 1e-2;
        let f = G::sample_window(-6.0, 6.0, step, |x| (-PI * x * x).exp()).unwrap();
        let g =
            G::sample_window(-5.0, 7.0, step, |x| 2.0 * (-PI * (x - 1.0).powi(2)).exp()).unwrap();
        let t = PlTriple::canonical(f, g, 0.5).unwrap();
        let dec = stability_decompose(&t, &DecomposeConfig::default()).unwrap();
        let r = &dec.report;
        let sups = t.f.sup_norm() + t.g.sup_norm() + t.h.sup_norm();
        let total = r.total_error() * dec.deficit.int_h;
        assert!(total <= 10.0 * step * sups, "{r:?}");
        assert!((r.w - (-1.0)).abs() < 0.05, "w = {}", r.w);
        assert!((r.a - 2.0).abs() < 1e-9);
        assert!(!r.hypothesis_satisfied);
        for x in [&dec.f_tilde, &dec.g_tilde, &dec.h_tilde] {
            assert!(is_log_concave(x, 1e-9).log_concave);
        }
        let json = r.to_json().unwrap();
        for key in [
            "\"w\"",
            "\"a\"",
            "\"epsilon\"",
            "\"err_f\"",
            "\"err_g\"",
            "\"err_h\"",
            "\"log10_bound\"",
            "\"hypothesis_satisfied\"",
            "\"stage_flags\"",
        ] {
            assert!(json.contains(key), "{key}");
        }
    }

    #[test]
    fn decompose_two_bump_is_far_from_hull() {
        let step = 1e-3;
        let a = 5.0;
        let f = G::sample_window(-0.5, 2.0 * a + 1.5, step, |x| {
            if (0.0..1.0).contains(&x) || (2.0 * a..2.0 * a + 1.0).contains(&x) {
                (-x).exp()
            } else {
                0.0
            }
        })
        .unwrap();
        let t = PlTriple::canonical(f.clone(), f.clone(), 0.5).unwrap();
        let dec = stability_decompose(&t, &DecomposeConfig::default()).unwrap();
        let far = dec.f_tilde.l1_distance(&log_concave_hull(&f));
        assert!(far >= 0.4 * f.integral(), "{far}");
        assert!(dec.report.err_h < 0.05, "{:?}", dec.report);
    }

    fn arb_log_concave() -> impl Strategy<Value = G> {
        (
            -1.0..1.0f64,
            0.2..3.0f64,
            -1.0..1.0f64,
            0.5..3.0f64,
            0.5..3.0f64,
        )
            .prop_map(|(c, a, b, wl, wr)| {
                G::sample_window(-4.0, 4.0, 0.02, move |x| {
                    if x < c - wl || x > c + wr {
                        0.0
                    } else {
                        (-a * (x - c).powi(2) + b * x).exp()
                    }
                })
                .unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hull_idempotent_and_monotone(f in arb_log_concave(), g in arb_log_concave(), bumps in prop::collection::vec((0usize..400, 0.0..2.0f64), 0..5)) {
            let mut v = f.values().to_vec();
            for (i, b) in bumps {
                v[i] += b;
            }
            let f2 = G::new(f.origin(), f.step(), v).unwrap();
            let h = log_concave_hull(&f2);
            prop_assert!(is_log_concave(&h, 1e-9).log_concave);
            prop_assert!(log_concave_hull(&h).l1_distance(&h) <= 1e-9 * h.integral());
            // f ≤ max(f, g) pointwise, so hulls are ordered.
            let m: Vec<f64> = f2.values().iter().zip(g.values()).map(|(a, b)| a.max(*b)).collect();
            let hm = log_concave_hull(&G::new(f.origin(), f.step(), m).unwrap());
            prop_assert!(h.values().iter().zip(hm.values()).all(|(a, b)| *a <= *b * (1.0 + 1e-12)));
        }

        #[test]
        fn sup_convolution_preserves_log_concavity(f in arb_log_concave(), g in arb_log_concave()) {
            // At λ = 1/2 with centre landing, h is a subsampled max-plus convolution
            // of concave sequences, hence exactly log-concave.
            let h = sup_convolve(&f, &g, 0.5, Landing::CenterOnly).unwrap().h;
            prop_assert!(is_log_concave(&h, 1e-9).log_concave);
            prop_assert!(h.integral() <= sup_convolution(&f, &g, 0.5).unwrap().integral() + 1e-12);
        }
    }
}
