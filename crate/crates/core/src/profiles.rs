//! Level-set boundary profiles: extraction, good-level masks, monotone
//! regularization, and the bubble rebuild whose level sets are the hulls.

use std::io::Write;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::gridfn::{GridFunction, GridSpec};
use crate::plcore::{DeficitReport, PlTriple};
use crate::scalar::Real;

/// Hull endpoints of the strict superlevel sets `{f > t_k}` on a level grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelProfile<S> {
    /// Increasing, positive.
    pub levels: Vec<S>,
    /// `None` marks an empty level.
    pub left: Vec<Option<S>>,
    pub right: Vec<Option<S>>,
    pub valid: Vec<bool>,
    /// `|co(A_t) \ A_t|`; zero on empty levels.
    pub hull_deficit: Vec<S>,
    /// `|A_t|`.
    pub measure: Vec<S>,
    /// Grid of the source function; used when rebuilding.
    pub grid: GridSpec<S>,
    /// Sup norm of the source, the value given to the top level set on rebuild.
    pub ceiling: S,
}

impl<S: Real> LevelProfile<S> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn log_levels(&self) -> Vec<S> {
        self.levels.iter().map(|t| t.ln()).collect()
    }

    pub fn is_level_empty(&self, k: usize) -> bool {
        self.left[k].is_none()
    }

    pub fn with_mask(mut self, valid: Vec<bool>) -> Self {
        assert_eq!(
            valid.len(),
            self.levels.len(),
            "mask length must match the level grid"
        );
        self.valid = valid;
        self
    }

    /// Indices of levels that are both valid and nonempty.
    pub fn usable(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.valid[k] && self.left[k].is_some())
    }

    /// CSV with columns `level, log_level, left, right, hull_deficit, valid, schema_version`.
    /// Empty levels leave `left` and `right` blank.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "level",
            "log_level",
            "left",
            "right",
            "hull_deficit",
            "valid",
            "schema_version",
        ])?;
        let opt = |v: Option<S>| v.map(|x| x.to_string()).unwrap_or_default();
        for k in 0..self.len() {
            wr.write_record([
                self.levels[k].to_string(),
                self.levels[k].ln().to_string(),
                opt(self.left[k]),
                opt(self.right[k]),
                self.hull_deficit[k].to_string(),
                self.valid[k].to_string(),
                PROFILE_SCHEMA_VERSION.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

/// `n` levels spaced geometrically from `lo` to `hi` (both included).
pub fn geometric_levels<S: Real>(lo: S, hi: S, n: usize) -> Result<Vec<S>> {
    if !(lo > S::zero() && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(domain(format!("need 0 < lo <= hi, got {lo}, {hi}")));
    }
    if n < 2 {
        return Ok(vec![hi; n]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = S::from_index(n - 1);
    let mut v: Vec<S> = (0..n)
        .map(|k| (a + (b - a) * S::from_index(k) / last).exp())
        .collect();
    v[0] = lo;
    v[n - 1] = hi;
    Ok(v)
}

/// Profile of the strict superlevel sets of `f` at the given increasing levels.
/// Every nonempty level starts out valid.
pub fn extract_profile<S: Real>(f: &GridFunction<S>, levels: &[S]) -> LevelProfile<S> {
    let vals = f.values();
    let n = vals.len();
    // Prefix and suffix maxima are monotone, so the first and last cell above
    // a level come from a binary search.
    let mut prefix = Vec::with_capacity(n);
    let mut m = S::zero();
    for &v in vals {
        m = m.max(v);
        prefix.push(m);
    }
    let mut suffix = vec![S::zero(); n];
    let mut m = S::zero();
    for i in (0..n).rev() {
        m = m.max(vals[i]);
        suffix[i] = m;
    }
    let mut sorted = vals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));

    let k = levels.len();
    let (mut left, mut right) = (Vec::with_capacity(k), Vec::with_capacity(k));
    let (mut hull_deficit, mut measure) = (Vec::with_capacity(k), Vec::with_capacity(k));
    for &t in levels {
        let first = prefix.partition_point(|&p| p <= t);
        if first == n {
            left.push(None);
            right.push(None);
            hull_deficit.push(S::zero());
            measure.push(S::zero());
            continue;
        }
        // suffix is nonincreasing: count of leading entries above t.
        let last = suffix.partition_point(|&p| p > t) - 1;
        let count = n - sorted.partition_point(|&v| v <= t);
        let (l, r) = (f.edge(first), f.edge(last + 1));
        let meas = S::from_index(count) * f.step();
        left.push(Some(l));
        right.push(Some(r));
        hull_deficit.push((S::from_index(last + 1 - first - count) * f.step()).max(S::zero()));
        measure.push(meas);
    }
    let valid = left.iter().map(Option::is_some).collect();
    LevelProfile {
        levels: levels.to_vec(),
        left,
        right,
        valid,
        hull_deficit,
        measure,
        grid: f.spec(),
        ceiling: f.sup_norm(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodLevels<S> {
    pub mask: Vec<bool>,
    /// `|H¹(C_t) - (1-λ)H¹(A_t) - λH¹(B_t)|` per level.
    pub excess: Vec<S>,
    /// Total level-measure `∫ 1[t bad] dt` of the rejected levels, each level
    /// owning the gap up to the next one.
    pub bad_level_measure: S,
}

/// Marks levels where the level-set measures nearly saturate the 1D
/// Brunn–Minkowski inequality.
pub fn good_levels<S: Real>(t: &PlTriple<S>, levels: &[S], threshold: S) -> GoodLevels<S> {
    let meas = |f: &GridFunction<S>| extract_profile(f, levels).measure;
    let (ma, mb, mc) = (meas(&t.f), meas(&t.g), meas(&t.h));
    let lam = t.lambda;
    let excess: Vec<S> = (0..levels.len())
        .map(|k| (mc[k] - (S::one() - lam) * ma[k] - lam * mb[k]).abs())
        .collect();
    let mask: Vec<bool> = excess.iter().map(|&e| e <= threshold).collect();
    let bad_level_measure = (0..levels.len())
        .filter(|&k| !mask[k])
        .map(|k| levels.get(k + 1).map_or(S::zero(), |&n| n - levels[k]))
        .sum();
    GoodLevels {
        mask,
        excess,
        bad_level_measure,
    }
}

/// `τ^{-3/2} ε^{1/4} ∫h`, plus a few cells of slack so an exact equality case
/// (ε ≈ 0) does not reject every level over grid rounding.
pub fn default_threshold<S: Real>(t: &PlTriple<S>, d: &DeficitReport<S>) -> S {
    let eps = d.epsilon.max(S::zero());
    t.tau.powf(S::lit(-1.5)) * eps.powf(S::lit(0.25)) * d.int_h + S::lit(4.0) * t.h.step()
}

/// Replaces `left` by the running inf and `right` by the running sup over valid
/// levels at or above each level. Levels with no valid level above become empty.
///
/// The top valid level keeps its own endpoints; including `t' = t` in the sup
/// is what makes the output right-continuous on the grid.
pub fn regularize<S: Real>(p: &LevelProfile<S>) -> Result<LevelProfile<S>> {
    if p.usable().next().is_none() {
        return Err(domain("profile has no valid nonempty level"));
    }
    let mut out = p.clone();
    let mut run: Option<(S, S)> = None;
    for k in (0..p.len()).rev() {
        if p.valid[k] {
            if let (Some(l), Some(r)) = (p.left[k], p.right[k]) {
                run = Some(match run {
                    Some((rl, rr)) => (rl.min(l), rr.max(r)),
                    None => (l, r),
                });
            }
        }
        out.left[k] = run.map(|x| x.0);
        out.right[k] = run.map(|x| x.1);
    }
    Ok(out)
}

/// Rebuilds the function whose strict superlevel set at each grid level
/// `t_k ≥ floor_level` is `[left_k, right_k)`, and which vanishes below the floor.
///
/// A cell whose centre lies in the set at level `k` but not `k + 1` gets value
/// `t_{k+1}`; cells in the top set get the profile's ceiling.
pub fn build_bubble<S: Real>(p: &LevelProfile<S>, floor_level: S) -> GridFunction<S> {
    let spec = p.grid;
    let ks: Vec<usize> = (0..p.len())
        .filter(|&k| p.levels[k] >= floor_level && p.left[k].is_some())
        .collect();
    let values = (0..spec.len)
        .map(|i| {
            let x = spec.center(i);
            let inside = |k: usize| match (p.left[k], p.right[k]) {
                (Some(l), Some(r)) => l <= x && x < r,
                _ => false,
            };
            // Sets are nested, so membership is a prefix of `ks`.
            let n_in = ks.partition_point(|&k| inside(k));
            if n_in == 0 {
                return S::zero();
            }
            let top = ks[n_in - 1];
            match p.levels.get(top + 1) {
                Some(&next) => next.min(p.ceiling).max(p.levels[top]),
                None => p.ceiling.max(p.levels[top]),
            }
        })
        .collect();
    GridFunction::from_spec(spec, values).expect("levels are finite and positive")
}
