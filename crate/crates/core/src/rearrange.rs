//! Symmetric decreasing rearrangement on the grid.

use crate::error::{domain, Result};
use crate::gridfn::GridFunction;
use crate::plcore::PlTriple;
use crate::scalar::Real;

/// `f*`: same cell values, sorted in decreasing order and laid out centre-outward
/// on a window `[-N/2·step, N/2·step)`.
pub fn symmetric_decreasing<S: Real>(f: &GridFunction<S>) -> Result<GridFunction<S>> {
    if !(f.integral() > S::zero()) {
        return Err(domain("rearrangement needs a positive integral"));
    }
    let n = f.len();
    let mut order: Vec<usize> = (0..n).collect();
    let vals = f.values();
    // Stable sort keeps ties in index order.
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).expect("finite values"));
    let mut out = vec![S::zero(); n];
    for (slot, &src) in centre_layout(n).iter().zip(&order) {
        out[*slot] = vals[src];
    }
    let origin = -S::from_index(n) / S::lit(2.0) * f.step();
    GridFunction::new(origin, f.step(), out)
}

/// Slot order for the centre-outward layout of `n` cells. Odd `n`: centre, then
/// alternately right and left. Even `n`: the cell just right of 0, then
/// alternately left and right.
fn centre_layout(n: usize) -> Vec<usize> {
    let half = n / 2;
    (0..n)
        .map(|r| {
            let k = r.div_ceil(2);
            match (n % 2, r % 2) {
                (1, 1) => half + k,
                (1, _) => half - k,
                (_, 0) => half + r / 2,
                _ => half - 1 - r / 2,
            }
        })
        .collect()
}

/// `(f*, g*, h*)` with the same λ and τ.
pub fn rearranged_triple<S: Real>(t: &PlTriple<S>) -> Result<PlTriple<S>> {
    PlTriple::with_tau(
        symmetric_decreasing(&t.f)?,
        symmetric_decreasing(&t.g)?,
        symmetric_decreasing(&t.h)?,
        t.lambda,
        t.tau,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plcore::sup_convolution;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    type G = GridFunction<f64>;

    fn distinct_levels(f: &G) -> Vec<f64> {
        let mut v: Vec<f64> = f.values().iter().copied().filter(|&x| x > 0.0).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    #[test]
    fn layouts_cover_every_cell() {
        for n in 1..20 {
            let mut l = centre_layout(n);
            l.sort();
            assert_eq!(l, (0..n).collect::<Vec<_>>());
        }
        assert_eq!(centre_layout(5), vec![2, 3, 1, 4, 0]);
        assert_eq!(centre_layout(4), vec![2, 1, 3, 0]);
    }

    #[test]
    fn two_bumps_become_centred_box() {
        let step = 0.01;
        let f = G::sample_window(0.0, 3.0, step, |x| {
            if !(1.0..2.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let s = symmetric_decreasing(&f).unwrap();
        assert!(s.l1_distance(&G::indicator(-1.0, 1.0, step).unwrap()) < 1e-9);
    }

    #[test]
    fn symmetric_decreasing_input_is_fixed() {
        let step = 1e-3;
        // Mirror the right half so the grid values are exactly symmetric.
        let half: Vec<f64> = (0..6000)
            .map(|i| (-PI * ((i as f64 + 0.5) * step).powi(2)).exp())
            .collect();
        let values: Vec<f64> = half.iter().rev().chain(half.iter()).copied().collect();
        let f = G::new(-6.0, step, values).unwrap();
        assert_eq!(symmetric_decreasing(&f).unwrap(), f);

        let sampled = G::sample_window(-6.0, 6.0, step, |x| (-PI * x * x).exp()).unwrap();
        assert!(
            symmetric_decreasing(&sampled)
                .unwrap()
                .l1_distance(&sampled)
                < 1e-12
        );
    }

    #[test]
    fn ramp_becomes_tent() {
        let step = 1e-3;
        let f = G::sample_window(0.0, 1.0, step, |x| x).unwrap();
        let s = symmetric_decreasing(&f).unwrap();
        let tent = G::sample(s.origin(), step, s.len(), |t| {
            (1.0 - 2.0 * t.abs()).max(0.0)
        })
        .unwrap();
        for i in 0..s.len() {
            assert!((s.values()[i] - tent.values()[i]).abs() <= 2.0 * step + 1e-12);
        }
    }

    #[test]
    fn zero_function_is_rejected() {
        assert!(symmetric_decreasing(&G::zeros(0.0, 0.1, 4).unwrap()).is_err());
    }

    #[test]
    fn translated_indicators() {
        let step = 1e-2;
        let t = PlTriple::canonical(
            G::indicator(0.0, 1.0, step).unwrap(),
            G::indicator(3.0, 4.0, step).unwrap(),
            0.5,
        )
        .unwrap();
        let r = rearranged_triple(&t).unwrap();
        let centred = G::indicator(-0.5, 0.5, step).unwrap();
        for x in [&r.f, &r.g, &r.h] {
            assert!(x.l1_distance(&centred) < 1e-9);
        }
        assert!(r.deficit().unwrap().epsilon.abs() < 1e-12);
    }

    fn arb_two_bump() -> impl Strategy<Value = G> {
        (
            0.2..1.0f64,
            0.2..1.0f64,
            0.1..1.0f64,
            0.1..2.0f64,
            0.1..1.0f64,
        )
            .prop_map(|(w1, h1, gap, w2, h2)| {
                G::sample_window(0.0, w1 + gap + w2, 0.02, move |x| {
                    if x < w1 {
                        h1
                    } else if x >= w1 + gap {
                        h2
                    } else {
                        0.0
                    }
                })
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn equimeasurable(values in prop::collection::vec(0.0..10.0f64, 1..200), o in -3.0..3.0f64) {
            let f = G::new(o, 0.05, values).unwrap();
            prop_assume!(f.integral() > 0.0);
            let s = symmetric_decreasing(&f).unwrap();
            prop_assert!((s.integral() - f.integral()).abs() <= 1e-12 * f.integral());
            prop_assert_eq!(s.sup_norm(), f.sup_norm());
            for t in distinct_levels(&f) {
                // Cell counts are the exact distribution function; measures agree up to edge rounding.
                let count = |g: &G| g.values().iter().filter(|&&v| v >= t).count();
                prop_assert_eq!(count(&s), count(&f));
                prop_assert!((s.superlevel(t, false).measure() - f.superlevel(t, false).measure()).abs() < 1e-9);
                let sl = s.superlevel(t, false);
                prop_assert_eq!(sl.intervals().len(), 1);
                let (l, r) = sl.hull().unwrap();
                prop_assert!((l + r).abs() <= s.step() + 1e-9);
            }
        }

        #[test]
        fn rearranged_triple_keeps_condition(f in arb_two_bump(), g in arb_two_bump(), lam in 0.2..0.8f64) {
            let t = PlTriple::canonical(f, g, lam).unwrap();
            let r = rearranged_triple(&t).unwrap();
            prop_assert!(r.condition_satisfied(), "{:?}", r.condition_report());
            let (d0, d1) = (t.deficit().unwrap().epsilon, r.deficit().unwrap().epsilon);
            prop_assert!(d1 <= d0 + t.quadrature_tol());
            // The canonical h of the rearranged pair is no larger than h*.
            let h_star = sup_convolution(&r.f, &r.g, lam).unwrap();
            prop_assert!(h_star.integral() <= r.h.integral() + t.quadrature_tol());
        }
    }
}
