//! Semi-synthetic simulation harness: a two-level treatment-effect
//! population, induced covariate shift, PATE/CATE error metrics, and a
//! seeded factorial sweep comparing selection methods.
//!
//! Selections are made on the observed covariates. Under a shift the true
//! effects (and the estimand) are generated at the shifted covariates.

mod dgp;
mod metrics;
mod sweep;

pub use dgp::{generate_population, induce_shift, DgpConfig, Link, Population};
pub use metrics::{evaluate_selection, fit_linear_cate, pate_estimate, pehe, Estimator, RIDGE_FALLBACK};
pub use sweep::{
    derive_seed, estimate_breakdown, run_comparison, Aggregate, Breakdown, Interval, Method, PopulationSpec, SimResult,
    SimRow, SimTiming, SweepConfig,
};
