//! Site selection for multi-site experiments by minimising the Wasserstein
//! distance between the covariate distribution of the candidate population
//! and that of the selected sites.
//!
//! * [`ot`]: exact discrete optimal transport.
//! * [`select`]: non-robust selection (branch-and-bound MILP, LP relaxation,
//!   enumeration oracle).
//! * [`dro`]: Wasserstein-ball robust selection via a cutting-plane game.
//! * [`radius`]: Jaccard-based calibration of the robustness radius.
//! * [`baselines`]: random and k-means stratified selection plus the
//!   brute-force comparators behind the survey-sampling equivalences.
//! * [`sim`]: semi-synthetic simulation harness.

pub mod error;
pub mod ot;
pub mod select;
pub mod dro;
pub mod radius;
pub mod baselines;
pub mod sim;

pub use error::{Error, Result};
