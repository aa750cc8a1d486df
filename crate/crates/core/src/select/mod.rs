//! Non-robust site selection: the `K`-subset whose uniform distribution is
//! closest in `W_p` to the uniform population distribution.

pub(crate) mod bnb;
mod enumerate;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{Exponent, PairCosts, SiteTable};

pub(crate) use bnb::{branch_and_bound, relax_and_round, BnbLimits};
pub use enumerate::{binomial, Combinations, ENUMERATION_LIMIT};
pub(crate) use enumerate::{enumerate_min, guard, IncrementalMinMax};

/// Sites up to which `SolveMode::Auto` runs the exact solver.
pub const AUTO_EXACT_LIMIT: usize = 100;

/// A budget-`K` subset of sites with its achieved `W_p` objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Sorted, distinct site indices.
    pub indices: Vec<usize>,
    pub objective: f64,
    pub p: Exponent,
    pub method: String,
    pub budget: usize,
}

impl Selection {
    pub(crate) fn new(mut indices: Vec<usize>, objective: f64, p: Exponent, method: &str) -> Self {
        indices.sort_unstable();
        let budget = indices.len();
        Selection {
            indices,
            objective,
            p,
            method: method.to_string(),
            budget,
        }
    }

    /// Evaluates `indices` against the uniform population of `table`.
    pub fn evaluate(table: &SiteTable, indices: Vec<usize>, p: Exponent, method: &str) -> Result<Self> {
        let n = table.len();
        check_indices(&indices, n)?;
        let costs = PairCosts::new(table, p);
        let objective = p.root(costs.cost_to_uniform(&vec![1.0 / n as f64; n], &sorted(&indices))?);
        Ok(Selection::new(indices, objective, p, method))
    }

    /// Indicator vector over `n` sites.
    pub fn indicator(&self, n: usize) -> Vec<bool> {
        let mut out = vec![false; n];
        for &i in &self.indices {
            out[i] = true;
        }
        out
    }
}

fn sorted(indices: &[usize]) -> Vec<usize> {
    let mut v = indices.to_vec();
    v.sort_unstable();
    v
}

fn check_indices(indices: &[usize], n: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::input("selection is empty"));
    }
    let s = sorted(indices);
    if s.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::input("selection repeats a site"));
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= n) {
        return Err(Error::input(format!("site index {bad} out of range for {n} sites")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Exact,
    Relaxed,
    #[default]
    Auto,
}

impl SolveMode {
    /// Resolves `Auto` for a table of `n` sites.
    pub fn resolve(self, n: usize) -> SolveMode {
        match self {
            SolveMode::Auto if n <= AUTO_EXACT_LIMIT => SolveMode::Exact,
            SolveMode::Auto => SolveMode::Relaxed,
            other => other,
        }
    }
}

impl FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolveMode::Exact),
            "relaxed" => Ok(SolveMode::Relaxed),
            "auto" => Ok(SolveMode::Auto),
            other => Err(Error::input(format!("unknown mode {other:?} (exact, relaxed, auto)"))),
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMode::Exact => "exact",
            SolveMode::Relaxed => "relaxed",
            SolveMode::Auto => "auto",
        })
    }
}

/// Which path produced a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveKind {
    Exact,
    RelaxedRounded,
    Enumeration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: SolveKind,
    pub wall_time_ms: f64,
    pub nodes: usize,
    pub lp_solves: usize,
    /// LP lower bound in `W_p` units, when an LP was solved.
    pub relaxation_objective: Option<f64>,
    /// Whether the selection is certified globally optimal.
    pub optimal: bool,
}

pub(crate) fn validate_budget(table: &SiteTable, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::input("budget K must be at least 1"));
    }
    if k > table.len() {
        return Err(Error::input(format!("budget K = {k} exceeds the {} candidate sites", table.len())));
    }
    Ok(())
}

pub(crate) fn uniform_dense(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Chooses `k` sites minimising `W_p(P, S)` for the uniform population `P`.
pub fn select_sites(table: &SiteTable, k: usize, p: Exponent, mode: SolveMode) -> Result<(Selection, SolveReport)> {
    validate_budget(table, k)?;
    let start = Instant::now();
    let n = table.len();
    let costs = PairCosts::new(table, p);
    let scenarios = [uniform_dense(n)];
    match mode.resolve(n) {
        SolveMode::Relaxed => {
            let out = relax_and_round(&costs, k, &scenarios)?;
            let selection = Selection::new(out.selection, p.root(out.cost), p, "lp-relaxed-rounded");
            let report = SolveReport {
                mode: SolveKind::RelaxedRounded,
                wall_time_ms: elapsed_ms(start),
                nodes: 1,
                lp_solves: out.lp_solves,
                relaxation_objective: Some(p.root(out.bound)),
                optimal: k == n,
            };
            Ok((selection, report))
        }
        _ => {
            let out = branch_and_bound(&costs, k, &scenarios, &BnbLimits::default())?;
            let selection = Selection::new(out.selection, p.root(out.cost), p, "milp-exact");
            let report = SolveReport {
                mode: SolveKind::Exact,
                wall_time_ms: elapsed_ms(start),
                nodes: out.nodes,
                lp_solves: out.lp_solves,
                relaxation_objective: (out.nodes > 0).then(|| p.root(out.root_bound)),
                optimal: out.optimal,
            };
            Ok((selection, report))
        }
    }
}

/// Solves the continuous relaxation and rounds to the `k` largest scores.
/// Returns the fractional scores, the rounded selection (true objective) and
/// the report carrying the LP bound.
pub fn lp_relax_and_round(table: &SiteTable, k: usize, p: Exponent) -> Result<(Vec<f64>, Selection, SolveReport)> {
    validate_budget(table, k)?;
    let start = Instant::now();
    let n = table.len();
    let costs = PairCosts::new(table, p);
    let out = relax_and_round(&costs, k, &[uniform_dense(n)])?;
    let selection = Selection::new(out.selection, p.root(out.cost), p, "lp-relaxed-rounded");
    let report = SolveReport {
        mode: SolveKind::RelaxedRounded,
        wall_time_ms: elapsed_ms(start),
        nodes: 1,
        lp_solves: out.lp_solves,
        relaxation_objective: Some(p.root(out.bound)),
        optimal: k == n,
    };
    Ok((out.scores, selection, report))
}

/// Globally optimal selection by exhaustive enumeration of all `C(n, k)`
/// subsets; refuses with [`Error::Guard`] above [`ENUMERATION_LIMIT`].
pub fn enumerate_oracle(table: &SiteTable, k: usize, p: Exponent) -> Result<Selection> {
    validate_budget(table, k)?;
    let n = table.len();
    guard(n, k)?;
    let costs = PairCosts::new(table, p);
    let (sel, cost) = enumerate_min(&costs, k, &[uniform_dense(n)])?;
    Ok(Selection::new(sel, p.root(cost), p, "enumeration"))
}
