//! Wasserstein distributionally robust site selection.
//!
//! The researcher minimises the worst case of `W_p(Q, S)` over all `Q` on the
//! candidate points with `W_p(Q, P) <= rho`. The solve is a cutting-plane
//! game: Nature answers each selection with an adversarial `Q` (upper bound),
//! the researcher re-optimises against every stored `Q` (lower bound).

mod adversary;
mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{DiscreteDistribution, Exponent, PairCosts, SiteTable};
use crate::select::bnb::improves;
use crate::select::{
    binomial, branch_and_bound, relax_and_round, select_sites, uniform_dense, validate_budget, BnbLimits,
    IncrementalMinMax, Selection, SolveMode,
};

use adversary::Adversary;
pub use oracle::{grid_minimax_oracle, GridOracle};

/// Subset counts up to which the researcher step enumerates instead of
/// branching.
const ENUMERATE_MASTER_LIMIT: u128 = 200_000;

/// `{Q : W_p(Q, center) <= radius}` over the candidate points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityBall {
    pub center: DiscreteDistribution,
    pub radius: f64,
    pub p: Exponent,
}

impl AmbiguityBall {
    pub fn new(center: DiscreteDistribution, radius: f64, p: Exponent) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::input(format!("radius must be a finite non-negative number, got {radius}")));
        }
        Ok(AmbiguityBall { center, radius, p })
    }

    /// The ball around the uniform distribution on all sites of `table`.
    pub fn around_population(table: &SiteTable, radius: f64, p: Exponent) -> Result<Self> {
        AmbiguityBall::new(DiscreteDistribution::uniform(table.len())?, radius, p)
    }

    pub fn contains(&self, q: &DiscreteDistribution, table: &SiteTable) -> Result<bool> {
        let d = crate::ot::wasserstein(q, &self.center, table, table, self.p)?;
        Ok(d <= self.radius + 1e-8)
    }
}

/// One adversarial distribution with its certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub distribution: DiscreteDistribution,
    /// `W_p(Q, P)`.
    pub distance_to_center: f64,
    /// `W_p(Q, S)` for the selection it answered.
    pub value_at_generation: f64,
    pub generated_for: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    fn dense(&self, n: usize) -> Vec<Vec<f64>> {
        self.scenarios.iter().map(|s| s.distribution.to_dense(n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    pub mode: SolveMode,
}

impl Default for DroOptions {
    fn default() -> Self {
        DroOptions {
            epsilon: 1e-4,
            max_iter: 50,
            mode: SolveMode::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroResult {
    /// Recommended selection; `objective` is the largest worst case the
    /// adversary found for it.
    pub selection: Selection,
    /// Non-robust starting selection.
    pub nonrobust: Selection,
    pub rho: f64,
    pub ub_trace: Vec<f64>,
    pub lb_trace: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
    pub scenario_set: ScenarioSet,
    pub converged: bool,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::input(format!("radius must be a finite non-negative number, got {rho}")));
    }
    Ok(())
}

/// Nature's response to `selection`: `Q` in the ball and `W_p(Q, S)`.
pub fn adversary_best_response(
    table: &SiteTable,
    selection: &Selection,
    ball: &AmbiguityBall,
) -> Result<(DiscreteDistribution, f64)> {
    check_rho(ball.radius)?;
    let n = table.len();
    ball.center.check_range(n)?;
    let costs = PairCosts::new(table, ball.p);
    let center = ball.center.to_dense(n);
    let adv = Adversary::new(&costs, center.clone(), ball.radius);
    let r = adv.respond(&selection.indices, &[center])?;
    Ok((DiscreteDistribution::from_dense(&r.q)?, ball.p.root(r.value)))
}

/// Researcher step; enumeration keeps per-subset bounds across iterations.
#[derive(Debug)]
enum Master {
    Enumerate(IncrementalMinMax),
    Branch,
    Relaxed,
}

impl Master {
    fn new(n: usize, k: usize, mode: SolveMode) -> Result<Self> {
        Ok(match mode.resolve(n) {
            SolveMode::Relaxed => Master::Relaxed,
            _ if binomial(n, k) <= ENUMERATE_MASTER_LIMIT => Master::Enumerate(IncrementalMinMax::new(n, k)?),
            _ => Master::Branch,
        })
    }

    /// `(selection, lower bound)` in cost units.
    fn solve(&mut self, costs: &PairCosts, k: usize, scenarios: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
        match self {
            Master::Enumerate(e) => e.solve(costs, scenarios),
            Master::Branch => {
                let out = branch_and_bound(costs, k, scenarios, &BnbLimits::default())?;
                let lb = if out.optimal { out.cost } else { out.root_bound };
                Ok((out.selection, lb))
            }
            Master::Relaxed => {
                let out = relax_and_round(costs, k, scenarios)?;
                Ok((out.selection, out.bound))
            }
        }
    }
}

/// Minimises the worst stored-scenario `W_p(Q, S)`; returns the selection
/// and that minimax value.
pub fn researcher_master(
    table: &SiteTable,
    k: usize,
    p: Exponent,
    scenarios: &ScenarioSet,
) -> Result<(Selection, f64)> {
    validate_budget(table, k)?;
    if scenarios.is_empty() {
        return Err(Error::input("researcher step needs at least one scenario"));
    }
    let n = table.len();
    for s in &scenarios.scenarios {
        s.distribution.check_range(n)?;
    }
    let costs = PairCosts::new(table, p);
    let dense = scenarios.dense(n);
    let mut master = Master::new(n, k, SolveMode::Exact)?;
    let (sel, lb) = master.solve(&costs, k, &dense)?;
    let lb = p.root(lb);
    Ok((Selection::new(sel, lb, p, "dro-master"), lb))
}

struct Candidate {
    selection: Vec<usize>,
    /// Worst cost over everything found for this selection so far.
    ub: f64,
}

/// Cutting-plane robust selection starting from the non-robust optimum.
pub fn robust_select(table: &SiteTable, k: usize, p: Exponent, rho: f64, options: &DroOptions) -> Result<DroResult> {
    validate_budget(table, k)?;
    check_rho(rho)?;
    if !(options.epsilon > 0.0) {
        return Err(Error::input("epsilon must be positive"));
    }
    if options.max_iter == 0 {
        return Err(Error::input("max_iter must be at least 1"));
    }
    let n = table.len();
    let costs = PairCosts::new(table, p);
    let center = uniform_dense(n);
    let adversary = Adversary::new(&costs, center.clone(), rho);
    let (nonrobust, _) = select_sites(table, k, p, options.mode)?;
    let mut master = Master::new(n, k, options.mode)?;

    let mut dense: Vec<Vec<f64>> = vec![center.clone()];
    let mut set = ScenarioSet {
        scenarios: vec![Scenario {
            distribution: DiscreteDistribution::uniform(n)?,
            distance_to_center: 0.0,
            value_at_generation: nonrobust.objective,
            generated_for: nonrobust.indices.clone(),
        }],
    };
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut current = nonrobust.indices.clone();
    let mut ub_trace = Vec::new();
    let mut lb_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        // warm start from the stored scenario that is already worst for `current`
        let mut worst_start = 0;
        let mut worst_value = f64::NEG_INFINITY;
        for (idx, q) in dense.iter().enumerate() {
            let v = costs.cost_to_uniform(q, &current)?;
            if v > worst_value {
                worst_value = v;
                worst_start = idx;
            }
        }
        let mut starts = vec![dense[worst_start].clone()];
        if worst_start != 0 {
            starts.push(center.clone());
        }
        let response = adversary.respond(&current, &starts)?;
        let ub_now = response.value.max(worst_value);

        let is_new = !dense.iter().any(|q| q == &response.q);
        if is_new {
            for c in &mut candidates {
                c.ub = c.ub.max(costs.cost_to_uniform(&response.q, &c.selection)?);
            }
            set.scenarios.push(Scenario {
                distribution: DiscreteDistribution::from_dense(&response.q)?.canonical(),
                distance_to_center: p.root(response.distance),
                value_at_generation: p.root(response.value),
                generated_for: current.clone(),
            });
            dense.push(response.q);
        }
        match candidates.iter_mut().find(|c| c.selection == current) {
            Some(c) => c.ub = c.ub.max(ub_now),
            None => candidates.push(Candidate {
                selection: current.clone(),
                ub: ub_now,
            }),
        }
        let best_ub = candidates
            .iter()
            .map(|c| c.ub)
            .fold(f64::INFINITY, f64::min);

        let (next, lb_cost) = master.solve(&costs, k, &dense)?;
        let lb = lb_trace.last().map_or(lb_cost, |&prev: &f64| prev.max(lb_cost));
        lb_trace.push(lb);
        ub_trace.push(best_ub);
        current = next;

        if p.root(best_ub) - p.root(lb) < options.epsilon {
            converged = true;
            break;
        }
    }

    let chosen = candidates
        .iter()
        .reduce(|a, b| if improves(b.ub, &b.selection, a.ub, &a.selection) { b } else { a })
        .expect("at least one iteration ran");
    let ub = p.root(chosen.ub);
    let lb = p.root(*lb_trace.last().expect("at least one iteration ran"));
    Ok(DroResult {
        selection: Selection::new(chosen.selection.clone(), ub, p, "dro"),
        nonrobust,
        rho,
        ub_trace: ub_trace.iter().map(|&v| p.root(v)).collect(),
        lb_trace: lb_trace.iter().map(|&v| p.root(v)).collect(),
        gap: (ub - lb).max(0.0),
        iterations,
        scenario_set: set,
        converged,
    })
}
