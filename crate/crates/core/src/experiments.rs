//! Reproducible experiments: the perturbed-Gaussian scaling family, the
//! two-bump family whose log-concave hull is far away, and seeded sweeps of
//! the decomposition pipeline. These run in `f64` only.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};
use crate::gridfn::GridFunction;
use crate::plcore::{deficit, sup_convolve, Landing, PlTriple};
use crate::reconstruct::{is_log_concave, log_concave_hull, stability_decompose, DecomposeConfig};

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;

/// Name of the odd bump used by [`example1`], written into its CSV.
pub const BUMP_NAME: &str = "sin(pi x)(1-x^2)^3/max";

fn raw_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (PI * x).sin() * (1.0 - x * x).powi(3)
    }
}

fn raw_bump_max() -> f64 {
    // The maximum sits in (0, 1/2); refine a coarse scan by golden section.
    let (mut lo, mut hi) = (0.0, 0.5);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if raw_bump(a) < raw_bump(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    raw_bump((lo + hi) / 2.0)
}

/// Odd, `C²`, supported in `[-1, 1]`, with maximum 1.
pub fn bump() -> impl Fn(f64) -> f64 + Copy + Send + Sync {
    let m = raw_bump_max();
    move |x| raw_bump(x) / m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1Config {
    pub half_width: f64,
    pub step: f64,
}

impl Default for Example1Config {
    fn default() -> Self {
        Self {
            half_width: 5.0,
            step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Row {
    pub eta: f64,
    pub epsilon: f64,
    /// `min_w ∫|g(x) - f(x + w)|` with `f` evaluated exactly.
    pub distance: f64,
    pub w: f64,
    pub g_log_concave: bool,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Result {
    pub rows: Vec<Example1Row>,
    /// Least-squares slope of `ln distance` against `ln ε`.
    pub slope: f64,
    /// `max ε/η²`.
    pub c_eps: f64,
    /// `min distance/η`.
    pub c_dist: f64,
}

/// `f = e^{-πx²}`, `g = (1 + ηφ) f`, `h` their half-half sup-convolution,
/// on `[-half_width, half_width]` with centre landing.
pub fn example1(etas: &[f64], config: &Example1Config) -> Result<Example1Result> {
    if etas.iter().any(|&e| !(e > 0.0 && e <= 0.2)) {
        return Err(precondition("eta values must lie in (0, 0.2]"));
    }
    let phi = bump();
    let gauss = |x: f64| (-PI * x * x).exp();
    let (lo, hi) = (-config.half_width, config.half_width);
    let f = GridFunction::sample_window(lo, hi, config.step, gauss)?;
    let rows = etas
        .iter()
        .map(|&eta| -> Result<Example1Row> {
            let g = GridFunction::sample_window(lo, hi, config.step, |x| {
                (1.0 + eta * phi(x)) * gauss(x)
            })?;
            let g_log_concave = is_log_concave(&g, 1e-9).log_concave;
            if !g_log_concave {
                return Ok(Example1Row {
                    eta,
                    epsilon: f64::NAN,
                    distance: f64::NAN,
                    w: f64::NAN,
                    g_log_concave,
                    skipped: true,
                });
            }
            let h = sup_convolve(&f, &g, 0.5, Landing::CenterOnly)?.h;
            let d = crate::plcore::deficit_of(&f, &g, &h, 0.5)?;
            let (w, distance) = min_shift_distance(&g, gauss);
            Ok(Example1Row {
                eta,
                epsilon: d.epsilon,
                distance,
                w,
                g_log_concave,
                skipped: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<&Example1Row> = rows
        .iter()
        .filter(|r| !r.skipped && r.epsilon > 0.0)
        .collect();
    let xs: Vec<f64> = used.iter().map(|r| r.epsilon.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.distance.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    let c_eps = used
        .iter()
        .map(|r| r.epsilon / (r.eta * r.eta))
        .fold(f64::NAN, f64::max);
    let c_dist = used
        .iter()
        .map(|r| r.distance / r.eta)
        .fold(f64::NAN, f64::min);
    Ok(Example1Result {
        rows,
        slope,
        c_eps,
        c_dist,
    })
}

/// `min_w ∫|g(x) - f(x + w)|` by midpoint quadrature on `g`'s cells: a scan over
/// `|w| ≤ 1/2` followed by golden-section refinement around the best sample.
fn min_shift_distance(g: &GridFunction<f64>, f: impl Fn(f64) -> f64 + Sync) -> (f64, f64) {
    let cost = |w: f64| -> f64 {
        g.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - f(g.center(i) + w)).abs())
            .sum::<f64>()
            * g.step()
    };
    let n = 200;
    let grid: Vec<f64> = (0..=n).map(|k| -0.5 + k as f64 / n as f64).collect();
    let costs: Vec<f64> = grid.par_iter().map(|&w| cost(w)).collect();
    let best = (0..=n).fold(0, |b, k| if costs[k] < costs[b] { k } else { b });
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if cost(a) <= cost(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let w = (lo + hi) / 2.0;
    let c = cost(w);
    if c <= costs[best] {
        (w, c)
    } else {
        (grid[best], costs[best])
    }
}

pub fn write_example1_csv<W: Write>(res: &Example1Result, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "eta",
        "epsilon",
        "distance",
        "w",
        "g_log_concave",
        "skipped",
        "bump",
        "schema_version",
    ])?;
    for r in &res.rows {
        out.write_record([
            r.eta.to_string(),
            r.epsilon.to_string(),
            r.distance.to_string(),
            r.w.to_string(),
            r.g_log_concave.to_string(),
            r.skipped.to_string(),
            BUMP_NAME.to_string(),
            EXPERIMENT_SCHEMA_VERSION.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example2Config {
    pub step: f64,
    /// Also run the decomposition and compare `f̃` with the log-concave hull.
    pub reconstruct: bool,
}

impl Default for Example2Config {
    fn default() -> Self {
        Self {
            step: 1e-3,
            reconstruct: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Row {
    pub a: f64,
    pub epsilon: f64,
    /// `e^{-A}/(1 + e^{-2A})`.
    pub epsilon_closed_form: f64,
    /// `∫(F - f)` with `F` the log-concave hull.
    pub hull_gap: f64,
    /// `e^{-1} - e^{-2A}`.
    pub hull_gap_closed_form: f64,
    /// `∫(F - f)/∫f`.
    pub hull_gap_ratio: f64,
    /// `∫|h - h_exact|` for the computed sup-convolution.
    pub h_error: f64,
    /// `∫|f̃ - F|/∫f`, when the decomposition ran.
    pub tilde_hull_distance: Option<f64>,
    pub err_h: Option<f64>,
}

fn two_bump(a: f64) -> impl Fn(f64) -> f64 {
    move |x| {
        if (0.0..1.0).contains(&x) || (2.0 * a..2.0 * a + 1.0).contains(&x) {
            (-x).exp()
        } else {
            0.0
        }
    }
}

/// `f = e^{-x}` on `[0,1] ∪ [2A, 2A+1]`, `g = f`, `h` their half-half
/// sup-convolution, which is `e^{-x}` on `[0,1] ∪ [A, A+1] ∪ [2A, 2A+1]`.
pub fn example2(a_values: &[f64], config: &Example2Config) -> Result<Vec<Example2Row>> {
    if a_values.iter().any(|&a| !(a >= 2.0 && a.is_finite())) {
        return Err(precondition("A values must be finite and >= 2"));
    }
    a_values
        .iter()
        .map(|&a| {
            let (lo, hi) = (-0.5, 2.0 * a + 1.5);
            let f = GridFunction::sample_window(lo, hi, config.step, two_bump(a))?;
            let h = sup_convolve(&f, &f, 0.5, Landing::CenterOnly)?.h;
            let exact = GridFunction::sample(h.origin(), h.step(), h.len(), |x| {
                if (0.0..1.0).contains(&x)
                    || (a..a + 1.0).contains(&x)
                    || (2.0 * a..2.0 * a + 1.0).contains(&x)
                {
                    (-x).exp()
                } else {
                    0.0
                }
            })?;
            let t = PlTriple::new(f.clone(), f.clone(), h.clone(), 0.5)?;
            let d = deficit(&t)?;
            let hull = log_concave_hull(&f);
            let hull_gap = hull.integral() - f.integral();
            let (tilde_hull_distance, err_h) = if config.reconstruct {
                let dec = stability_decompose(&t, &DecomposeConfig::default())?;
                (
                    Some(dec.f_tilde.l1_distance(&hull) / f.integral()),
                    Some(dec.report.err_h),
                )
            } else {
                (None, None)
            };
            Ok(Example2Row {
                a,
                epsilon: d.epsilon,
                epsilon_closed_form: (-a).exp() / (1.0 + (-2.0 * a).exp()),
                hull_gap,
                hull_gap_closed_form: (-1f64).exp() - (-2.0 * a).exp(),
                hull_gap_ratio: hull_gap / f.integral(),
                h_error: h.l1_distance(&exact),
                tilde_hull_distance,
                err_h,
            })
        })
        .collect()
}

pub fn write_example2_csv<W: Write>(rows: &[Example2Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "A",
        "epsilon",
        "epsilon_closed_form",
        "hull_gap",
        "hull_gap_closed_form",
        "hull_gap_ratio",
        "h_error",
        "tilde_hull_distance",
        "err_h",
        "schema_version",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.a.to_string(),
            r.epsilon.to_string(),
            r.epsilon_closed_form.to_string(),
            r.hull_gap.to_string(),
            r.hull_gap_closed_form.to_string(),
            r.hull_gap_ratio.to_string(),
            r.h_error.to_string(),
            opt(r.tilde_hull_distance),
            opt(r.err_h),
            EXPERIMENT_SCHEMA_VERSION.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Shape families drawn by [`random_log_concave`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    TruncatedQuadratic,
    Laplace,
    Exponential,
    Indicator,
}

/// A seeded log-concave function on `ℝ`, supported in `[-3, 3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogConcaveShape {
    pub family: Family,
    pub centre: f64,
    pub rate: f64,
    pub tilt: f64,
    pub left: f64,
    pub right: f64,
    pub height: f64,
}

impl LogConcaveShape {
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.left || x >= self.right {
            return 0.0;
        }
        let u = x - self.centre;
        let log = match self.family {
            Family::Gaussian => -self.rate * u * u,
            Family::TruncatedQuadratic => -self.rate * u * u + self.tilt * u,
            Family::Laplace => -self.rate * u.abs(),
            Family::Exponential => self.tilt * u,
            Family::Indicator => 0.0,
        };
        self.height * log.exp()
    }

    pub fn sample(&self, lo: f64, hi: f64, step: f64) -> Result<GridFunction<f64>> {
        GridFunction::sample_window(lo, hi, step, |x| self.eval(x))
    }
}

pub fn random_log_concave(rng: &mut impl Rng) -> LogConcaveShape {
    let family = match rng.gen_range(0..5) {
        0 => Family::Gaussian,
        1 => Family::TruncatedQuadratic,
        2 => Family::Laplace,
        3 => Family::Exponential,
        _ => Family::Indicator,
    };
    let centre = rng.gen_range(-0.5..0.5);
    let (left, right) = match family {
        Family::Gaussian | Family::Laplace => (-3.0, 3.0),
        _ => (
            centre - rng.gen_range(0.4..2.0),
            centre + rng.gen_range(0.4..2.0),
        ),
    };
    LogConcaveShape {
        family,
        centre,
        rate: rng.gen_range(0.5..4.0),
        tilt: rng.gen_range(-2.0..2.0),
        left,
        right,
        height: rng.gen_range(0.5..2.0),
    }
}

/// A pair `(f, g)` with `g(x) = c·f(x - s)·(1 + amplitude·φ((x - x₀)/r))`;
/// amplitude zero gives an exact equality pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedPair {
    pub shape: LogConcaveShape,
    pub shift: f64,
    pub scale: f64,
    pub bump_centre: f64,
    pub bump_radius: f64,
    pub f: GridFunction<f64>,
    pub g: GridFunction<f64>,
}

pub fn perturbed_pair(
    seed: u64,
    amplitude: f64,
    window: (f64, f64),
    step: f64,
) -> Result<PerturbedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = random_log_concave(&mut rng);
    let shift = rng.gen_range(-1.0..1.0);
    let scale = rng.gen_range(0.5..2.0);
    let bump_centre =
        rng.gen_range(-0.5..0.5) + (shape.left.max(-3.0) + shape.right.min(3.0)) / 2.0;
    let bump_radius = rng.gen_range(0.5..1.5);
    let phi = bump();
    let f = shape.sample(window.0, window.1, step)?;
    // g lives on the translated window, so the unperturbed g is an exact grid translate.
    let g = GridFunction::sample_window(window.0 + shift, window.1 + shift, step, |x| {
        scale
            * shape.eval(x - shift)
            * (1.0 + amplitude * phi((x - shift - bump_centre) / bump_radius))
    })?;
    Ok(PerturbedPair {
        shape,
        shift,
        scale,
        bump_centre,
        bump_radius,
        f,
        g,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub amplitudes: Vec<f64>,
    /// Instances per amplitude; instance `i` uses seed `seed + i`.
    pub instances: usize,
    pub seed: u64,
    pub lambda: f64,
    pub tau: f64,
    pub window: (f64, f64),
    pub step: f64,
    pub n_levels: usize,
    pub output: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![1e-3, 1e-2, 1e-1],
            instances: 30,
            seed: 1,
            lambda: 0.5,
            tau: 0.5,
            window: (-4.0, 4.0),
            step: 1e-2,
            n_levels: 4096,
            output: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.is_empty() || self.amplitudes.iter().any(|&a| !(0.0..=0.5).contains(&a))
        {
            return Err(precondition("amplitudes must lie in [0, 1/2]"));
        }
        if self.instances == 0 {
            return Err(precondition("need at least one instance per amplitude"));
        }
        if !(self.tau > 0.0
            && self.tau <= 0.5
            && self.lambda >= self.tau
            && self.lambda <= 1.0 - self.tau)
        {
            return Err(precondition(
                "need 0 < tau <= 1/2 and tau <= lambda <= 1 - tau",
            ));
        }
        if !(self.step > 0.0 && self.window.1 - self.window.0 > self.step) {
            return Err(precondition("window must span more than one positive step"));
        }
        if self.n_levels < 2 {
            return Err(precondition("need at least two levels"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub amplitude: f64,
    pub family: Family,
    pub epsilon: f64,
    pub err_f: f64,
    pub err_g: f64,
    pub err_h: f64,
    pub w: f64,
    /// `∫h`, to undo the normalization of the three errors.
    pub int_h: f64,
    pub sup_sum: f64,
    pub flags: String,
}

impl SweepRow {
    pub fn total_error(&self) -> f64 {
        self.err_f + self.err_g + self.err_h
    }

    pub fn failed(&self) -> bool {
        self.flags.starts_with("error:")
    }
}

/// Decomposes one seeded pair with centre landing.
pub fn sweep_instance(seed: u64, amplitude: f64, config: &SweepConfig) -> SweepRow {
    let run = || -> Result<(SweepRow, Vec<String>)> {
        let pair = perturbed_pair(seed, amplitude, config.window, config.step)?;
        let h = sup_convolve(&pair.f, &pair.g, config.lambda, Landing::CenterOnly)?.h;
        let sup_sum = pair.f.sup_norm() + pair.g.sup_norm() + h.sup_norm();
        let t = PlTriple::with_tau(pair.f, pair.g, h, config.lambda, config.tau)?;
        let dec = stability_decompose(
            &t,
            &DecomposeConfig {
                n_levels: config.n_levels,
                landing: Landing::CenterOnly,
                ..DecomposeConfig::default()
            },
        )?;
        let r = dec.report;
        Ok((
            SweepRow {
                seed,
                amplitude,
                family: pair.shape.family,
                epsilon: r.epsilon,
                err_f: r.err_f,
                err_g: r.err_g,
                err_h: r.err_h,
                w: r.w,
                int_h: dec.deficit.int_h,
                sup_sum,
                flags: String::new(),
            },
            r.stage_flags,
        ))
    };
    match run() {
        Ok((mut row, flags)) => {
            row.flags = flags.join(";");
            row
        }
        Err(e) => SweepRow {
            seed,
            amplitude,
            family: {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                random_log_concave(&mut rng).family
            },
            epsilon: f64::NAN,
            err_f: f64::NAN,
            err_g: f64::NAN,
            err_h: f64::NAN,
            w: f64::NAN,
            int_h: f64::NAN,
            sup_sum: f64::NAN,
            flags: format!("error: {e}"),
        },
    }
}

/// Rows in (amplitude, instance) order whatever the thread schedule.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let jobs: Vec<(u64, f64)> = config
        .amplitudes
        .iter()
        .flat_map(|&a| (0..config.instances as u64).map(move |i| (i, a)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(i, a)| sweep_instance(config.seed.wrapping_add(i), a, config))
        .collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "seed",
        "amplitude",
        "family",
        "epsilon",
        "err_f",
        "err_g",
        "err_h",
        "w",
        "int_h",
        "flags",
        "schema_version",
    ])?;
    for r in rows {
        let family = serde_json::to_value(r.family)?;
        out.write_record([
            r.seed.to_string(),
            r.amplitude.to_string(),
            family.as_str().unwrap_or_default().to_string(),
            r.epsilon.to_string(),
            r.err_f.to_string(),
            r.err_g.to_string(),
            r.err_h.to_string(),
            r.w.to_string(),
            r.int_h.to_string(),
            r.flags.clone(),
            EXPERIMENT_SCHEMA_VERSION.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
