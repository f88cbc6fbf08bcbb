//! Numerical laboratory for the quantitative stability of the Prékopa–Leindler
//! inequality in one dimension, with a two-dimensional reduction.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod diagnostics;
pub mod envelope;
pub mod error;
pub mod experiments;
pub mod gridfn;
pub mod multidim;
pub mod plcore;
pub mod profiles;
pub mod rearrange;
pub mod reconstruct;
pub mod scalar;

pub use constants::TheoremConstants;
pub use diagnostics::{
    check_logconcave_tails, check_sup_ratio, check_tail_truncation, constants_table, CheckRow,
    ConstantsRow,
};
pub use envelope::{
    four_point_check, greatest_convex_minorant, least_concave_majorant, monotonize,
    monotonize_convex, three_point_check, Direction, EnvelopePair, SampledFn, ViolationReport,
};
pub use error::{Error, Result};
pub use gridfn::{GridFunction, GridSpec, IntervalUnion};
pub use multidim::{
    distribution, multiplicative_to_additive, reduced_deficit, sup_convolve_2d, AdditiveGrid,
    DistributionProfile, GridFunction2D, ReducedDeficit,
};
pub use plcore::{
    amgm_stability, deficit, deficit_of, freiman_check, minkowski_sum, sup_convolution,
    sup_convolve, DeficitReport, Landing, PlTriple,
};
pub use profiles::{
    build_bubble, extract_profile, geometric_levels, good_levels, regularize, GoodLevels,
    LevelProfile,
};
pub use rearrange::{rearranged_triple, symmetric_decreasing};
pub use reconstruct::{
    align, from_envelopes, from_envelopes_capped, is_log_concave, log_concave_hull,
    stability_decompose, DecomposeConfig, Decomposition, StabilityReport,
};
pub use scalar::Real;

pub type GridFunctionF64 = GridFunction<f64>;
pub type GridFunctionF32 = GridFunction<f32>;
pub type GridFunction2DF64 = GridFunction2D<f64>;
pub type IntervalUnionF64 = IntervalUnion<f64>;
pub type PlTripleF64 = PlTriple<f64>;
pub type PlTripleF32 = PlTriple<f32>;
