//! Nonnegative functions on the line, stored as piecewise-constant samples on a
//! uniform grid, and finite unions of half-open intervals.
//!
//! Cell `i` of a [`GridFunction`] is `[origin + i*step, origin + (i+1)*step)` and
//! the function equals `values[i]` on it; outside the window it is zero. Level
//! sets are therefore exact unions of cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform grid layout without values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<S> {
    pub origin: S,
    pub step: S,
    pub len: usize,
}

impl<S: Real> GridSpec<S> {
    pub fn edge(&self, i: usize) -> S {
        self.origin + S::from_index(i) * self.step
    }

    pub fn center(&self, i: usize) -> S {
        self.origin + (S::from_index(i) + S::lit(0.5)) * self.step
    }

    pub fn end(&self) -> S {
        self.edge(self.len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction<S> {
    origin: S,
    step: S,
    values: Vec<S>,
}

#[derive(Deserialize)]
struct RawGrid<S> {
    origin: S,
    step: S,
    values: Vec<S>,
}

pub(crate) fn check_value<S: Real>(v: S, location: impl FnOnce() -> String) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidValue {
            location: location(),
            reason: "value is not finite",
        });
    }
    if v < S::zero() {
        return Err(Error::InvalidValue {
            location: location(),
            reason: "value is negative",
        });
    }
    Ok(())
}

impl<S: Real> GridFunction<S> {
    pub fn new(origin: S, step: S, values: Vec<S>) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::InvalidGrid("origin is not finite".into()));
        }
        if !(step.is_finite() && step > S::zero()) {
            return Err(Error::InvalidGrid(format!(
                "step must be finite and > 0, got {step}"
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            check_value(v, || format!("index {i}"))?;
        }
        Ok(Self {
            origin,
            step,
            values,
        })
    }

    pub fn zeros(origin: S, step: S, len: usize) -> Result<Self> {
        Self::new(origin, step, vec![S::zero(); len])
    }

    pub fn from_spec(spec: GridSpec<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != spec.len {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                spec.len,
                values.len()
            )));
        }
        Self::new(spec.origin, spec.step, values)
    }

    /// Samples `f` at the midpoints of `len` cells starting at `origin`.
    pub fn sample(origin: S, step: S, len: usize, f: impl Fn(S) -> S) -> Result<Self> {
        let spec = GridSpec { origin, step, len };
        let values = (0..len).map(|i| f(spec.center(i))).collect();
        Self::new(origin, step, values)
    }

    /// Samples `f` on the window `[lo, hi)`; the cell count is `round((hi - lo) / step)`.
    pub fn sample_window(lo: S, hi: S, step: S, f: impl Fn(S) -> S) -> Result<Self> {
        let len = cell_count(lo, hi, step)?;
        Self::sample(lo, step, len, f)
    }

    /// `height` on `[lo, hi)`, with the window exactly the interval.
    pub fn indicator(lo: S, hi: S, step: S) -> Result<Self> {
        let len = cell_count(lo, hi, step)?;
        Self::new(lo, step, vec![S::one(); len])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawGrid<S> = serde_json::from_str(s)?;
        Self::new(raw.origin, raw.step, raw.values)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn origin(&self) -> S {
        self.origin
    }

    pub fn step(&self) -> S {
        self.step
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec(&self) -> GridSpec<S> {
        GridSpec {
            origin: self.origin,
            step: self.step,
            len: self.values.len(),
        }
    }

    pub fn edge(&self, i: usize) -> S {
        self.spec().edge(i)
    }

    pub fn center(&self, i: usize) -> S {
        self.spec().center(i)
    }

    /// Right end of the sampled window.
    pub fn end(&self) -> S {
        self.edge(self.len())
    }

    /// Value at `x` (zero outside the window).
    pub fn value_at(&self, x: S) -> S {
        match self.cell_of(x) {
            Some(i) => self.values[i],
            None => S::zero(),
        }
    }

    pub fn cell_of(&self, x: S) -> Option<usize> {
        let pos = ((x - self.origin) / self.step).floor();
        if pos < S::zero() {
            return None;
        }
        let i = pos.to_usize()?;
        (i < self.len()).then_some(i)
    }

    /// First and last index of a positive cell.
    pub fn support(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(|&v| v > S::zero())?;
        let last = self.values.iter().rposition(|&v| v > S::zero())?;
        Some((first, last))
    }

    pub fn integral(&self) -> S {
        self.values.iter().copied().sum::<S>() * self.step
    }

    pub fn sup_norm(&self) -> S {
        self.values.iter().copied().fold(S::zero(), S::max)
    }

    pub fn scaled(&self, c: S) -> Self {
        assert!(
            c >= S::zero() && c.is_finite(),
            "scale factor must be finite and >= 0"
        );
        Self {
            origin: self.origin,
            step: self.step,
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    /// `x -> f(x - w)` with no snapping: only the origin moves.
    pub fn translated(&self, w: S) -> Self {
        Self {
            origin: self.origin + w,
            step: self.step,
            values: self.values.clone(),
        }
    }

    /// `x -> c * f(x - w)` with `w` snapped to the nearest multiple of the step.
    pub fn shift_scale(&self, w: S, c: S) -> Self {
        let cells = (w / self.step).round();
        let mut out = self.scaled(c);
        out.origin = self.origin + cells * self.step;
        out
    }

    /// `∫|f - g|` over the line. Grids that differ are compared on the merged
    /// breakpoint set, which is exact for piecewise-constant functions.
    pub fn l1_distance(&self, other: &Self) -> S {
        if self.origin == other.origin && self.step == other.step {
            let n = self.len().max(other.len());
            let sum: S = (0..n)
                .map(|i| {
                    let a = self.values.get(i).copied().unwrap_or_else(S::zero);
                    let b = other.values.get(i).copied().unwrap_or_else(S::zero);
                    (a - b).abs()
                })
                .sum();
            return sum * self.step;
        }
        overlay_integral(self, other, |a, b| (a - b).abs())
    }

    /// `∫_{-∞}^{x} f`.
    pub fn cumulative(&self, x: S) -> S {
        if self.is_empty() || x <= self.origin {
            return S::zero();
        }
        let pos = (x - self.origin) / self.step;
        let n = self.len();
        let whole = pos.floor().to_usize().unwrap_or(n).min(n);
        let mut acc: S = self.values[..whole].iter().copied().sum::<S>() * self.step;
        if whole < n {
            acc += self.values[whole] * (x - self.edge(whole));
        }
        acc
    }

    /// Overlap-weighted average onto another uniform grid (preserves integrals
    /// over the covered window).
    pub fn resample(&self, spec: GridSpec<S>) -> Result<Self> {
        let mut prefix = Vec::with_capacity(self.len() + 1);
        prefix.push(S::zero());
        let mut acc = S::zero();
        for &v in &self.values {
            acc += v * self.step;
            prefix.push(acc);
        }
        let cum = |x: S| -> S {
            if x <= self.origin {
                return S::zero();
            }
            let pos = (x - self.origin) / self.step;
            let n = self.len();
            let whole = pos.floor().to_usize().unwrap_or(n).min(n);
            let mut c = prefix[whole];
            if whole < n {
                c += self.values[whole] * (x - self.edge(whole));
            }
            c
        };
        let values = (0..spec.len)
            .map(|j| ((cum(spec.edge(j + 1)) - cum(spec.edge(j))) / spec.step).max(S::zero()))
            .collect();
        Self::from_spec(spec, values)
    }

    /// Cells where the value exceeds `t` (strict) or reaches it, merged into
    /// maximal half-open intervals.
    pub fn superlevel(&self, t: S, strict: bool) -> IntervalUnion<S> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for (i, &v) in self.values.iter().enumerate() {
            let inside = if strict { v > t } else { v >= t };
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((self.edge(s), self.edge(i)));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((self.edge(s), self.end()));
        }
        IntervalUnion::from_sorted_disjoint(out)
    }
}

fn cell_count<S: Real>(lo: S, hi: S, step: S) -> Result<usize> {
    if !(hi > lo) || !(step > S::zero()) {
        return Err(Error::InvalidGrid(format!(
            "window [{lo}, {hi}) with step {step} is empty"
        )));
    }
    ((hi - lo) / step)
        .round()
        .to_usize()
        .ok_or_else(|| Error::InvalidGrid("cell count overflow".into()))
}

/// Integrates `op(f(x), g(x))` over the union of both windows by sweeping the
/// merged set of cell edges.
fn overlay_integral<S: Real>(
    f: &GridFunction<S>,
    g: &GridFunction<S>,
    op: impl Fn(S, S) -> S,
) -> S {
    let (nf, ng) = (f.len(), g.len());
    let ef = |k: usize| f.edge(k);
    let eg = |k: usize| g.edge(k);
    let mut x = if nf == 0 {
        eg(0)
    } else if ng == 0 {
        ef(0)
    } else {
        ef(0).min(eg(0))
    };
    let (mut a, mut b) = (0usize, 0usize);
    let advance = |x: S, a: &mut usize, b: &mut usize| {
        while *a <= nf && nf > 0 && ef(*a) <= x {
            *a += 1;
        }
        while *b <= ng && ng > 0 && eg(*b) <= x {
            *b += 1;
        }
    };
    advance(x, &mut a, &mut b);
    let mut acc = S::zero();
    loop {
        let next_f = (nf > 0 && a <= nf).then(|| ef(a));
        let next_g = (ng > 0 && b <= ng).then(|| eg(b));
        let nx = match (next_f, next_g) {
            (Some(p), Some(q)) => p.min(q),
            (Some(p), None) => p,
            (None, Some(q)) => q,
            (None, None) => break,
        };
        let fv = if a >= 1 && a <= nf {
            f.values[a - 1]
        } else {
            S::zero()
        };
        let gv = if b >= 1 && b <= ng {
            g.values[b - 1]
        } else {
            S::zero()
        };
        acc += op(fv, gv) * (nx - x);
        x = nx;
        advance(x, &mut a, &mut b);
    }
    acc
}

/// Finite union of disjoint half-open intervals `[left, right)`, sorted and
/// with touching pieces merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalUnion<S> {
    intervals: Vec<(S, S)>,
}

impl<S: Real> Default for IntervalUnion<S> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<S: Real> IntervalUnion<S> {
    pub fn empty() -> Self {
        Self {
            intervals: Vec::new(),
        }
    }

    pub fn interval(left: S, right: S) -> Self {
        Self::from_intervals([(left, right)])
    }

    /// Normalizes an arbitrary collection: drops degenerate pieces, sorts,
    /// merges overlapping or touching pieces.
    pub fn from_intervals(pieces: impl IntoIterator<Item = (S, S)>) -> Self {
        let mut v: Vec<(S, S)> = pieces.into_iter().filter(|(l, r)| l < r).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite endpoints"));
        Self::from_sorted_disjoint(v)
    }

    fn from_sorted_disjoint(v: Vec<(S, S)>) -> Self {
        let mut out: Vec<(S, S)> = Vec::with_capacity(v.len());
        for (l, r) in v {
            if l >= r {
                continue;
            }
            match out.last_mut() {
                Some(last) if l <= last.1 => last.1 = last.1.max(r),
                _ => out.push((l, r)),
            }
        }
        Self { intervals: out }
    }

    pub fn intervals(&self) -> &[(S, S)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> S {
        self.intervals.iter().map(|&(l, r)| r - l).sum()
    }

    /// Convex hull `(min left, max right)`.
    pub fn hull(&self) -> Option<(S, S)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    /// `|co(A) \ A|`.
    pub fn hull_deficit(&self) -> S {
        match self.hull() {
            Some((l, r)) => (r - l) - self.measure(),
            None => S::zero(),
        }
    }

    pub fn contains(&self, x: S) -> bool {
        self.intervals.iter().any(|&(l, r)| l <= x && x < r)
    }

    /// Every piece of `self` lies inside a piece of `other` widened by `tol` on both sides.
    pub fn is_subset_of(&self, other: &Self, tol: S) -> bool {
        self.intervals.iter().all(|&(l, r)| {
            other
                .intervals
                .iter()
                .any(|&(ol, or)| ol - tol <= l && r <= or + tol)
        })
    }

    /// `alpha*A + beta*B`. Empty when either summand is empty.
    pub fn minkowski_sum(&self, other: &Self, alpha: S, beta: S) -> Self {
        let mut pieces = Vec::with_capacity(self.intervals.len() * other.intervals.len());
        for &(l1, r1) in &self.intervals {
            for &(l2, r2) in &other.intervals {
                pieces.push((alpha * l1 + beta * l2, alpha * r1 + beta * r2));
            }
        }
        Self::from_intervals(pieces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type G = GridFunction<f64>;

    fn gaussian(step: f64) -> GridFunction<f64> {
        G::sample_window(-6.0, 6.0, step, |x: f64| {
            (-std::f64::consts::PI * x * x).exp()
        })
        .unwrap()
    }

    #[test]
    fn integral_examples() {
        let ind = G::indicator(0.0, 1.0, 0.01).unwrap();
        assert!((ind.integral() - 1.0).abs() < 1e-12);
        assert_eq!(G::zeros(0.0, 0.1, 10).unwrap().integral(), 0.0);
        // Midpoint rule of the unit Gaussian on [-6, 6].
        let oracle: f64 = (0..12_000)
            .map(|i| {
                let x = -6.0 + (i as f64 + 0.5) * 1e-3;
                (-std::f64::consts::PI * x * x).exp() * 1e-3
            })
            .sum();
        assert!((oracle - 1.0).abs() < 5e-4);
        assert!((gaussian(1e-3).integral() - 1.0).abs() < 5e-4);
    }

    #[test]
    fn sup_norm_examples() {
        let ind = G::indicator(0.0, 1.0, 0.01).unwrap();
        assert_eq!(ind.sup_norm(), 1.0);
        assert_eq!(ind.scaled(2.0).sup_norm(), 2.0);
        let g = gaussian(1e-3);
        let at_zero = g.value_at(0.0);
        assert_eq!(g.sup_norm(), at_zero.max(g.value_at(-1e-4)));
        assert!(g.sup_norm() <= 1.0);
    }

    #[test]
    fn l1_examples() {
        let a = G::indicator(0.0, 1.0, 0.01).unwrap();
        let b = G::indicator(0.0, 2.0, 0.01).unwrap();
        let c = G::indicator(0.5, 1.5, 0.01).unwrap();
        assert_eq!(a.l1_distance(&a), 0.0);
        assert!((a.l1_distance(&b) - 1.0).abs() < 1e-12);
        assert!((a.l1_distance(&c) - 1.0).abs() < 0.02);
        assert!((a.l1_distance(&c) - c.l1_distance(&a)).abs() < 1e-12);
    }

    #[test]
    fn l1_across_misaligned_grids() {
        let a = G::indicator(0.0, 1.0, 0.1).unwrap();
        let b = a.translated(0.05);
        // Symmetric difference of [0,1) and [0.05,1.05).
        assert!((a.l1_distance(&b) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn superlevel_examples() {
        let two = G::sample_window(0.0, 3.0, 0.01, |x: f64| {
            if (0.0..1.0).contains(&x) || (2.0..3.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let s = two.superlevel(0.5, false);
        assert_eq!(s.intervals().len(), 2);
        assert!(
            (s.intervals()[0].0 - 0.0).abs() < 1e-12 && (s.intervals()[0].1 - 1.0).abs() < 1e-9
        );
        assert!((s.intervals()[1].0 - 2.0).abs() < 1e-9 && (s.intervals()[1].1 - 3.0).abs() < 1e-9);
        assert!(two.superlevel(1.5, true).is_empty());

        let step = 1e-3;
        let tri = G::sample_window(-1.0, 1.0, step, |x: f64| (1.0 - x.abs()).max(0.0)).unwrap();
        let s = tri.superlevel(0.5, false);
        let (l, r) = s.hull().unwrap();
        assert_eq!(s.intervals().len(), 1);
        assert!((l + 0.5).abs() <= step && (r - 0.5).abs() <= step);
    }

    #[test]
    fn shift_scale_examples() {
        let a = G::indicator(0.0, 1.0, 0.01).unwrap();
        assert_eq!(a.shift_scale(0.0, 1.0), a);
        let s = a.shift_scale(1.0, 2.0);
        let expect = G::indicator(1.0, 2.0, 0.01).unwrap().scaled(2.0);
        assert!(s.l1_distance(&expect) < 1e-9);

        let step = 1e-3;
        let g = gaussian(step);
        let moved = g.shift_scale(0.5, 1.0);
        let analytic = G::sample(moved.origin(), step, moved.len(), |x: f64| {
            (-std::f64::consts::PI * (x - 0.5) * (x - 0.5)).exp()
        })
        .unwrap();
        assert!(moved.l1_distance(&analytic) <= 2.0 * step);
    }

    #[test]
    fn json_reader_names_bad_index() {
        let err =
            GridFunction::<f64>::from_json_str(r#"{"origin":0,"step":0.5,"values":[1,2,-3]}"#)
                .unwrap_err()
                .to_string();
        assert!(err.contains("index 2"), "{err}");
        assert!(
            GridFunction::<f64>::from_json_str(r#"{"origin":0,"step":0,"values":[1]}"#).is_err()
        );
        let f = GridFunction::<f64>::from_json_str(r#"{"origin":-1,"step":0.5,"values":[0,1,2]}"#)
            .unwrap();
        let back = GridFunction::<f64>::from_json_str(&f.to_json_string().unwrap()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn resample_preserves_integral() {
        let g = gaussian(1e-2);
        let spec = GridSpec {
            origin: -6.003,
            step: 3.7e-3,
            len: 3300,
        };
        let r = g.resample(spec).unwrap();
        assert!((r.integral() - g.integral()).abs() < 1e-12);
    }

    #[test]
    fn interval_union_normalizes() {
        let u = IntervalUnion::<f64>::from_intervals([
            (2.0, 3.0),
            (0.0, 1.0),
            (1.0, 1.5),
            (2.5, 2.7),
            (4.0, 4.0),
        ]);
        assert_eq!(u.intervals(), &[(0.0, 1.5), (2.0, 3.0)]);
        assert!((u.measure() - 2.5).abs() < 1e-15);
        assert!((u.hull_deficit() - 0.5).abs() < 1e-15);
        assert!(IntervalUnion::<f64>::empty().hull().is_none());
    }

    #[test]
    fn works_in_single_precision() {
        let f = GridFunction::<f32>::indicator(0.0, 1.0, 0.01).unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-4);
        assert_eq!(f.superlevel(0.5, true).intervals().len(), 1);
    }

    fn arb_grid() -> impl Strategy<Value = GridFunction<f64>> {
        (
            -3.0..3.0f64,
            0.01..0.5f64,
            prop::collection::vec(0.0..5.0f64, 1..60),
        )
            .prop_map(|(o, s, v)| GridFunction::new(o, s, v).unwrap())
    }

    proptest! {
        #[test]
        fn shift_scale_scales_integral(f in arb_grid(), w in -5.0..5.0f64, c in 0.0..4.0f64) {
            let s = f.shift_scale(w, c);
            prop_assert!((s.integral() - c * f.integral()).abs() <= 1e-12 * (1.0 + c * f.integral()));
        }

        #[test]
        fn layer_cake_identity(f in arb_grid()) {
            // ∫ f = ∫_0^∞ |{f > t}| dt; the distribution function is a step
            // function with jumps at the distinct values.
            let mut levels: Vec<f64> = f.values().to_vec();
            levels.push(0.0);
            levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            levels.dedup();
            let cake: f64 = levels.windows(2).map(|w| f.superlevel(w[0], true).measure() * (w[1] - w[0])).sum();
            let total = f.integral();
            prop_assert!((cake - total).abs() <= 1e-6 * total.max(1e-12));
        }

        #[test]
        fn superlevels_nested(f in arb_grid(), t1 in 0.0..5.0f64, dt in 0.0..2.0f64) {
            let lo = f.superlevel(t1, false);
            let hi = f.superlevel(t1 + dt, false);
            prop_assert!(hi.is_subset_of(&lo, 0.0));
        }

        #[test]
        fn l1_triangle(f in arb_grid(), g in arb_grid(), h in arb_grid()) {
            let lhs = f.l1_distance(&h);
            let rhs = f.l1_distance(&g) + g.l1_distance(&h);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
        }
    }
}
