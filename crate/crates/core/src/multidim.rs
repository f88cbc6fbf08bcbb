//! Two-dimensional grid functions, their distribution functions, and the
//! reduction of a planar triple to a one-dimensional additive triple through
//! `F(t) ↦ F(eˣ)eˣ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Error, Result};
use crate::gridfn::{check_value, GridFunction};
use crate::plcore::{deficit_of, DeficitReport, Landing};
use crate::scalar::Real;

/// Largest side length accepted by [`sup_convolve_2d`]; the enumeration is
/// quartic in the side length.
pub const MAX_SUP_CONV_SIDE: usize = 128;

/// Piecewise-constant function on an `nx × ny` grid; `values[i][j]` covers
/// `[x0 + i·dx, x0 + (i+1)·dx) × [y0 + j·dy, y0 + (j+1)·dy)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction2D<S> {
    origin: (S, S),
    step: (S, S),
    values: Vec<Vec<S>>,
}

#[derive(Deserialize)]
#[serde(bound = "S: Real")]
struct Raw2D<S> {
    origin: (S, S),
    step: (S, S),
    values: Vec<Vec<S>>,
}

impl<S: Real> GridFunction2D<S> {
    pub fn new(origin: (S, S), step: (S, S), values: Vec<Vec<S>>) -> Result<Self> {
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if !(step.0 > S::zero() && step.1 > S::zero() && step.0.is_finite() && step.1.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "steps must be positive and finite, got ({}, {})",
                step.0, step.1
            )));
        }
        let ny = values.first().map_or(0, Vec::len);
        if values.is_empty() || ny == 0 {
            return Err(Error::InvalidGrid(
                "grid must have at least one cell".into(),
            ));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != ny {
                return Err(Error::InvalidGrid(format!(
                    "row {i} has {} cells, expected {ny}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                check_value(v, || format!("cell ({i}, {j})"))?;
            }
        }
        Ok(Self {
            origin,
            step,
            values,
        })
    }

    pub fn sample(
        origin: (S, S),
        step: (S, S),
        shape: (usize, usize),
        f: impl Fn(S, S) -> S,
    ) -> Result<Self> {
        let half = S::lit(0.5);
        let values = (0..shape.0)
            .map(|i| {
                let x = origin.0 + (S::from_index(i) + half) * step.0;
                (0..shape.1)
                    .map(|j| f(x, origin.1 + (S::from_index(j) + half) * step.1))
                    .collect()
            })
            .collect();
        Self::new(origin, step, values)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: Raw2D<S> = serde_json::from_str(s)?;
        Self::new(raw.origin, raw.step, raw.values)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn origin(&self) -> (S, S) {
        self.origin
    }

    pub fn step(&self) -> (S, S) {
        self.step
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), self.values[0].len())
    }

    pub fn cell_area(&self) -> S {
        self.step.0 * self.step.1
    }

    pub fn integral(&self) -> S {
        self.values.iter().flatten().fold(S::zero(), |a, &v| a + v) * self.cell_area()
    }

    pub fn sup_norm(&self) -> S {
        self.values
            .iter()
            .flatten()
            .fold(S::zero(), |a, &v| a.max(v))
    }

    fn positive_cells(&self) -> Vec<(usize, usize, S)> {
        let mut out = Vec::new();
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > S::zero() {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

/// Two-dimensional sup-convolution by direct enumeration of positive cell
/// pairs; the grids must share steps and sides are capped at
/// [`MAX_SUP_CONV_SIDE`].
pub fn sup_convolve_2d<S: Real>(
    f: &GridFunction2D<S>,
    g: &GridFunction2D<S>,
    lambda: S,
    landing: Landing,
) -> Result<GridFunction2D<S>> {
    if !(lambda > S::zero() && lambda < S::one()) {
        return Err(precondition(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    if f.step != g.step {
        return Err(precondition(
            "two-dimensional sup-convolution needs equal steps",
        ));
    }
    let (sf, sg) = (f.shape(), g.shape());
    if sf.0.max(sf.1).max(sg.0).max(sg.1) > MAX_SUP_CONV_SIDE {
        return Err(precondition(format!(
            "grid sides exceed {MAX_SUP_CONV_SIDE}"
        )));
    }
    let mu = S::one() - lambda;
    let out_len = |a: usize, b: usize| {
        (mu * S::from_index(a - 1) + lambda * S::from_index(b - 1))
            .round()
            .to_usize()
            .expect("finite length")
            + 1
    };
    let shape = (out_len(sf.0, sg.0), out_len(sf.1, sg.1));
    let origin = (
        mu * f.origin.0 + lambda * g.origin.0,
        mu * f.origin.1 + lambda * g.origin.1,
    );
    let pf: Vec<_> = f
        .positive_cells()
        .into_iter()
        .map(|(i, j, v)| (i, j, v.powf(mu)))
        .collect();
    let pg: Vec<_> = g
        .positive_cells()
        .into_iter()
        .map(|(i, j, v)| (i, j, v.powf(lambda)))
        .collect();
    let centre_tol = S::lit(1e-9);
    let land = |a: usize, b: usize, n: usize| -> Option<usize> {
        let p = mu * S::from_index(a) + lambda * S::from_index(b);
        let k = p.round();
        if landing == Landing::CenterOnly && (p - k).abs() > centre_tol {
            return None;
        }
        k.to_usize().filter(|&k| k < n)
    };
    let values = pf
        .par_iter()
        .fold(
            || vec![vec![S::zero(); shape.1]; shape.0],
            |mut acc, &(i, j, a)| {
                for &(k, l, b) in &pg {
                    if let (Some(x), Some(y)) = (land(i, k, shape.0), land(j, l, shape.1)) {
                        let v = a * b;
                        if v > acc[x][y] {
                            acc[x][y] = v;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![vec![S::zero(); shape.1]; shape.0],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(&b) {
                    for (x, &y) in ra.iter_mut().zip(rb) {
                        *x = x.max(y);
                    }
                }
                a
            },
        );
    GridFunction2D::new(origin, f.step, values)
}

/// `F(t) = |{f > t}|`, held exactly as the sorted cell values and the cell area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionProfile<S> {
    pub levels: Vec<S>,
    pub measures: Vec<S>,
    /// Positive cell values in increasing order.
    sorted: Vec<S>,
    /// Prefix sums of `sorted`.
    prefix: Vec<S>,
    cell_area: S,
}

impl<S: Real> DistributionProfile<S> {
    /// Profile of a step distribution: `cells` cells of `cell_area` at each value.
    pub fn from_cells(values: impl IntoIterator<Item = S>, cell_area: S, levels: &[S]) -> Self {
        let mut sorted: Vec<S> = values.into_iter().filter(|&v| v > S::zero()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(S::zero());
        for &v in &sorted {
            let last = *prefix.last().expect("seeded");
            prefix.push(last + v);
        }
        let mut p = Self {
            levels: levels.to_vec(),
            measures: Vec::new(),
            sorted,
            prefix,
            cell_area,
        };
        p.measures = levels.iter().map(|&t| p.measure_above(t)).collect();
        p
    }

    /// `F(t)`.
    pub fn measure_above(&self, t: S) -> S {
        S::from_index(self.sorted.len() - self.sorted.partition_point(|&v| v <= t)) * self.cell_area
    }

    /// `∫₀ᵘ F(t) dt = area · Σ min(vᵢ, u)`.
    pub fn integral_up_to(&self, u: S) -> S {
        if u <= S::zero() {
            return S::zero();
        }
        let k = self.sorted.partition_point(|&v| v <= u);
        (self.prefix[k] + S::from_index(self.sorted.len() - k) * u) * self.cell_area
    }

    /// `∫₀^∞ F`.
    pub fn total(&self) -> S {
        self.prefix[self.sorted.len()] * self.cell_area
    }

    pub fn sup(&self) -> S {
        self.sorted.last().copied().unwrap_or_else(S::zero)
    }

    /// Left Riemann sum of `F` on `0 < t₁ < … < t_K`: an upper bound for
    /// `∫₀^{t_K} F`, exact when every cell value is a level.
    pub fn layer_cake_on_levels(&self) -> S {
        let mut acc = S::zero();
        let (mut t0, mut f0) = (S::zero(), self.measure_above(S::zero()));
        for (&t, &m) in self.levels.iter().zip(&self.measures) {
            acc += (t - t0) * f0;
            t0 = t;
            f0 = m;
        }
        acc
    }

    /// Cell values in increasing order, one per distinct value.
    pub fn jump_levels(&self) -> Vec<S> {
        let mut v = self.sorted.clone();
        v.dedup();
        v
    }
}

pub fn distribution<S: Real>(
    f: &GridFunction2D<S>,
    levels: &[S],
) -> Result<DistributionProfile<S>> {
    if levels.iter().any(|&t| !(t > S::zero())) || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(precondition("levels must be positive and increasing"));
    }
    Ok(DistributionProfile::from_cells(
        f.values.iter().flatten().copied(),
        f.cell_area(),
        levels,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveGrid<S> {
    /// `x_hi = ln(sup)`; `x_lo = ln(rel_floor · sup)`.
    pub rel_floor: S,
    pub cells: usize,
}

impl<S: Real> Default for AdditiveGrid<S> {
    fn default() -> Self {
        Self {
            rel_floor: S::lit(1e-9),
            cells: 2048,
        }
    }
}

/// `f(x) = F(eˣ) eˣ` as exact cell averages on `[ln(floor·top), ln top]`:
/// the cell `[a, b)` gets `(∫_{eᵃ}^{eᵇ} F) / (b - a)`.
pub fn multiplicative_to_additive<S: Real>(
    dist: &DistributionProfile<S>,
    top: S,
    grid: AdditiveGrid<S>,
) -> Result<GridFunction<S>> {
    if !(grid.rel_floor > S::zero() && grid.rel_floor < S::one()) || grid.cells == 0 {
        return Err(precondition(
            "additive grid needs 0 < rel_floor < 1 and at least one cell",
        ));
    }
    if !(top > S::zero()) {
        return Err(precondition("additive grid needs a positive top level"));
    }
    let hi = top.ln();
    let lo = (grid.rel_floor * top).ln();
    let step = (hi - lo) / S::from_index(grid.cells);
    let values = (0..grid.cells)
        .map(|i| {
            let a = (lo + S::from_index(i) * step).exp();
            let b = (lo + S::from_index(i + 1) * step).exp();
            ((dist.integral_up_to(b) - dist.integral_up_to(a)) / step).max(S::zero())
        })
        .collect();
    GridFunction::new(lo, step, values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedDeficit<S> {
    pub deficit_2d: DeficitReport<S>,
    pub reduced: DeficitReport<S>,
    /// Part of `∫F`, `∫G`, `∫H` below the additive grid, relative to the smallest integral.
    pub truncation: S,
    pub condition_pairs: usize,
    pub condition_violations: usize,
    /// Level pairs checked against `H(r^{1-λ}s^λ) ≥ F(r)^{1-λ}G(s)^λ` and
    /// `H(r^{1-λ}s^λ) ≥ ((1-λ)√F(r) + λ√G(s))²`.
    pub level_pairs: usize,
    pub multiplicative_violations: usize,
    pub brunn_minkowski_violations: usize,
    pub flags: Vec<String>,
}

/// Number of random point pairs used to sample the planar condition.
pub const CONDITION_SAMPLES: usize = 4096;

fn condition_sample<S: Real>(
    f: &GridFunction2D<S>,
    g: &GridFunction2D<S>,
    h: &GridFunction2D<S>,
    lambda: S,
    seed: u64,
) -> (usize, usize) {
    let pf = f.positive_cells();
    let pg = g.positive_cells();
    if pf.is_empty() || pg.is_empty() {
        return (0, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = S::one() - lambda;
    let (sh, hs) = (h.shape(), h.step);
    let centre = |o: S, s: S, i: usize| o + (S::from_index(i) + S::lit(0.5)) * s;
    let mut violations = 0;
    for _ in 0..CONDITION_SAMPLES {
        let (i, j, a) = pf[rng.gen_range(0..pf.len())];
        let (k, l, b) = pg[rng.gen_range(0..pg.len())];
        let zx = mu * centre(f.origin.0, f.step.0, i) + lambda * centre(g.origin.0, g.step.0, k);
        let zy = mu * centre(f.origin.1, f.step.1, j) + lambda * centre(g.origin.1, g.step.1, l);
        let cx = ((zx - h.origin.0) / hs.0 - S::lit(0.5)).round();
        let cy = ((zy - h.origin.1) / hs.1 - S::lit(0.5)).round();
        // Best of the 3×3 neighbourhood absorbs landing rounding.
        let mut best = S::zero();
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                let (x, y) = (
                    cx.to_i64().unwrap_or(-2) + dx,
                    cy.to_i64().unwrap_or(-2) + dy,
                );
                if x >= 0 && y >= 0 && (x as usize) < sh.0 && (y as usize) < sh.1 {
                    best = best.max(h.values[x as usize][y as usize]);
                }
            }
        }
        let need = a.powf(mu) * b.powf(lambda);
        if best < need * (S::one() - S::lit(1e-12)) {
            violations += 1;
        }
    }
    (CONDITION_SAMPLES, violations)
}

/// Reduces a planar triple to the additive one-dimensional triple built from
/// its distribution functions and compares deficits. Condition failures are
/// reported through counts and flags, never as errors.
pub fn reduced_deficit<S: Real>(
    f: &GridFunction2D<S>,
    g: &GridFunction2D<S>,
    h: &GridFunction2D<S>,
    lambda: S,
    grid: AdditiveGrid<S>,
) -> Result<ReducedDeficit<S>> {
    if !(lambda > S::zero() && lambda < S::one()) {
        return Err(precondition(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    let (i_f, i_g, i_h) = (f.integral(), g.integral(), h.integral());
    if !(i_f > S::zero() && i_g > S::zero()) {
        return Err(domain("reduction needs positive integrals"));
    }
    let geo = (S::one() - lambda) * i_f.ln() + lambda * i_g.ln();
    let geo = geo.exp();
    let deficit_2d = DeficitReport {
        int_f: i_f,
        int_g: i_g,
        int_h: i_h,
        geo_mean: geo,
        epsilon: i_h / geo - S::one(),
        a: i_g / i_f,
    };
    let mut flags = Vec::new();
    let (condition_pairs, condition_violations) = condition_sample(f, g, h, lambda, 0x5eed);
    if condition_violations > 0 {
        flags.push(format!("condition_violations={condition_violations}"));
    }

    let (df, dg, dh) = (
        distribution(f, &[])?,
        distribution(g, &[])?,
        distribution(h, &[])?,
    );
    let top = df.sup().max(dg.sup()).max(dh.sup());
    // Sampled level pairs on a geometric grid below each sup.
    let n_levels = 64;
    let levels_of = |d: &DistributionProfile<S>| -> Vec<S> {
        let hi = d.sup();
        (0..n_levels)
            .map(|k| hi * (S::lit(1e-6).ln() * S::from_index(k) / S::from_index(n_levels)).exp())
            .collect()
    };
    let mu = S::one() - lambda;
    let (mut level_pairs, mut mult_viol, mut bm_viol) = (0, 0, 0);
    let max_step = f.step.0.max(f.step.1);
    for &r in &levels_of(&df) {
        for &s in &levels_of(&dg) {
            let (fr, gs) = (df.measure_above(r), dg.measure_above(s));
            if fr == S::zero() || gs == S::zero() {
                continue;
            }
            level_pairs += 1;
            let hv = dh.measure_above((mu * r.ln() + lambda * s.ln()).exp());
            // Boundary cells of the three level sets.
            let tol = S::lit(8.0) * max_step * (fr.sqrt() + gs.sqrt() + hv.sqrt())
                + S::lit(4.0) * h.cell_area();
            if hv + tol < (mu * fr.ln() + lambda * gs.ln()).exp() {
                mult_viol += 1;
            }
            if hv + tol < (mu * fr.sqrt() + lambda * gs.sqrt()).powi(2) {
                bm_viol += 1;
            }
        }
    }
    if mult_viol > 0 {
        flags.push(format!("multiplicative_violations={mult_viol}"));
    }
    if bm_viol > 0 {
        flags.push(format!("brunn_minkowski_violations={bm_viol}"));
    }

    let fa = multiplicative_to_additive(&df, top, grid)?;
    let ga = multiplicative_to_additive(&dg, top, grid)?;
    let ha = multiplicative_to_additive(&dh, top, grid)?;
    let lo = (grid.rel_floor * top).ln().exp();
    let truncation =
        (df.integral_up_to(lo) + dg.integral_up_to(lo) + dh.integral_up_to(lo)) / i_f.min(i_g);
    let reduced = deficit_of(&fa, &ga, &ha, lambda)?;
    Ok(ReducedDeficit {
        deficit_2d,
        reduced,
        truncation,
        condition_pairs,
        condition_violations,
        level_pairs,
        multiplicative_violations: mult_viol,
        brunn_minkowski_violations: bm_viol,
        flags,
    })
}
