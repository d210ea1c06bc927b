// Guards written as `!(x > 0.0)` reject NaN along with the out-of-range
// values; the positive comparison would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Frozen oracle constants keep all 17 significant digits.
#![allow(clippy::excessive_precision)]

//! Particle-level laboratory for the small-diffusion limit of aggregation
//! dynamics in convex domains.
//!
//! The crate couples a reflected stochastic particle system with its
//! projected deterministic twin, measures their separation with the exact
//! bottleneck (infinity-Wasserstein) distance, and wraps both in a Monte
//! Carlo harness that estimates convergence rates, fits the divergence
//! growth curve, and checks the theoretical envelope
//! `2 d nu t (1 - 2 Lambda t exp(-2 Lambda t))`.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod montecarlo;
pub mod potentials;
pub mod rng;
pub mod stats;
pub mod transport;

pub use dynamics::{
    drift, drift_all, sample_initial, simulate_pair, step_deterministic, step_stochastic,
    CoupledTrajectoryPair, PairSnapshot, ParticleEnsemble, Rect, TrajectoryConfig,
};
pub use error::{Error, Result};
pub use geometry::ConvexDomain;
pub use montecarlo::{
    confidence_interval, default_init_region, default_nu_fit_threshold, envelope_violations,
    fit_growth, fit_rate, run_experiment, weak_error_study, DtRule, ErrorPolicy, ExperimentOutput,
    ExperimentPlan, FitResult, GrowthFit, RateFit, SampleRecord, StatCell, StatSeries,
    WeakErrorOutput, WeakErrorPoint, WeakErrorStudy,
};
pub use potentials::{ExternalPotential, PotentialKind, PotentialSpec};
pub use transport::{
    bottleneck_w_inf_sq, bottleneck_w_inf_sq_linear, brute_force_bottleneck, has_perfect_matching,
    MatchResult,
};
