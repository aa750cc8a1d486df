//! Branch-and-bound over selection indicators for the (multi-scenario)
//! transport-to-selection LP.
//!
//! For every scenario `q` with weights `mu` the model carries conditional
//! transport variables `x[q][i][j] = pi_ij / mu_i` on the rows with `mu_i > 0`:
//!
//! ```text
//! sum_j x_qij = 1                      (row mass)
//! sum_i K mu_i x_qij - s_j = 0         (selected column mass s_j / K)
//! x_qij <= s_j                         (linking, added lazily)
//! sum_j s_j = K
//! ```
//!
//! With one scenario the objective is `sum mu_i c_ij x_qij`; with several an
//! epigraph variable `t >= cost_q` is minimised. For integral `s` the linking
//! rows are implied by the column rows, so they only tighten the relaxation
//! and may be added on demand without affecting correctness.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::rc::Rc;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};

use crate::error::{Error, Result};
use crate::ot::PairCosts;

/// Indicators closer than this to 0 or 1 count as integral.
const INTEGRALITY_TOL: f64 = 1e-6;
/// Linking rows violated by more than this are added to the LP.
const LINK_TOL: f64 = 1e-7;
/// Nodes whose bound exceeds the incumbent by more than this are pruned;
/// anything closer is explored so that ties can be resolved lexicographically.
const PRUNE_TOL: f64 = 1e-7;
/// Exact costs closer than this are ties.
pub(crate) const TIE_TOL: f64 = 1e-9;
const MAX_CUT_ROUNDS: usize = 40;

#[derive(Debug, Clone)]
pub(crate) struct BnbLimits {
    pub max_nodes: usize,
}

impl Default for BnbLimits {
    fn default() -> Self {
        BnbLimits { max_nodes: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BnbOutcome {
    pub selection: Vec<usize>,
    /// Exact worst-case transport cost (`W_p^p`) of `selection`.
    pub cost: f64,
    /// LP bound at the root in cost units.
    pub root_bound: f64,
    pub nodes: usize,
    pub lp_solves: usize,
    pub optimal: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct RelaxOutcome {
    pub scores: Vec<f64>,
    pub selection: Vec<usize>,
    pub cost: f64,
    pub bound: f64,
    pub lp_solves: usize,
}

/// Lexicographic "better than" on (cost, sorted indices) with tie tolerance.
pub(crate) fn improves(cost: f64, sel: &[usize], best_cost: f64, best: &[usize]) -> bool {
    if cost < best_cost - TIE_TOL {
        return true;
    }
    cost <= best_cost + TIE_TOL && sel < best
}

/// Worst-case cost of selections against a scenario set, memoised.
pub(crate) struct Evaluator<'a> {
    costs: &'a PairCosts,
    scenarios: &'a [Vec<f64>],
    cache: HashMap<Vec<usize>, f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(costs: &'a PairCosts, scenarios: &'a [Vec<f64>]) -> Self {
        Evaluator {
            costs,
            scenarios,
            cache: HashMap::new(),
        }
    }

    /// `max_q W_p^p(q, uniform(sel))`.
    pub fn cost(&mut self, sel: &[usize]) -> Result<f64> {
        if let Some(&c) = self.cache.get(sel) {
            return Ok(c);
        }
        let mut worst = 0.0_f64;
        for q in self.scenarios {
            worst = worst.max(self.costs.cost_to_uniform(q, sel)?);
        }
        self.cache.insert(sel.to_vec(), worst);
        Ok(worst)
    }
}

struct Model {
    s: Vec<Variable>,
    /// Per scenario, the conditional transport variables of each positive row.
    x: Vec<Vec<Vec<Variable>>>,
}

fn lp_error(e: microlp::Error) -> Error {
    Error::internal(format!("LP solver: {e}"))
}

/// `Ok(None)` when the edit makes the LP infeasible.
fn outcome(r: std::result::Result<microlp::SolveOutcome, microlp::Error>) -> Result<Option<Solution>> {
    match r {
        Ok(o) => o
            .into_solution()
            .map(Some)
            .map_err(|_| Error::internal("LP solve interrupted")),
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(lp_error(e)),
    }
}

impl Model {
    fn build(costs: &PairCosts, k: usize, scenarios: &[Vec<f64>]) -> (Problem, Model) {
        let n = costs.len();
        let multi = scenarios.len() > 1;
        let mut pb = Problem::new(OptimizationDirection::Minimize);
        let s: Vec<Variable> = (0..n).map(|_| pb.add_var(0.0, (0.0, 1.0))).collect();
        let t = multi.then(|| pb.add_var(1.0, (0.0, f64::INFINITY)));
        let mut x = Vec::with_capacity(scenarios.len());
        let mut positive_rows = Vec::with_capacity(scenarios.len());
        for mu in scenarios {
            let rows: Vec<usize> = (0..n).filter(|&i| mu[i] > 0.0).collect();
            let vars: Vec<Vec<Variable>> = rows
                .iter()
                .map(|&i| {
                    (0..n)
                        .map(|j| {
                            let obj = if multi { 0.0 } else { mu[i] * costs.get(i, j) };
                            pb.add_var(obj, (0.0, 1.0))
                        })
                        .collect()
                })
                .collect();
            x.push(vars);
            positive_rows.push(rows);
        }
        for (q, mu) in scenarios.iter().enumerate() {
            let rows = &positive_rows[q];
            for vars in &x[q] {
                let expr: Vec<(Variable, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
                pb.add_constraint(&expr[..], ComparisonOp::Eq, 1.0);
            }
            for j in 0..n {
                let mut expr: Vec<(Variable, f64)> = rows
                    .iter()
                    .zip(&x[q])
                    .map(|(&i, vars)| (vars[j], k as f64 * mu[i]))
                    .collect();
                expr.push((s[j], -1.0));
                pb.add_constraint(&expr[..], ComparisonOp::Eq, 0.0);
            }
            if let Some(t) = t {
                let mut expr: Vec<(Variable, f64)> = Vec::with_capacity(rows.len() * n + 1);
                for (&i, vars) in rows.iter().zip(&x[q]) {
                    for (j, &v) in vars.iter().enumerate() {
                        expr.push((v, mu[i] * costs.get(i, j)));
                    }
                }
                expr.push((t, -1.0));
                pb.add_constraint(&expr[..], ComparisonOp::Le, 0.0);
            }
        }
        let budget: Vec<(Variable, f64)> = s.iter().map(|&v| (v, 1.0)).collect();
        pb.add_constraint(&budget[..], ComparisonOp::Eq, k as f64);
        (pb, Model { s, x })
    }

    fn scores(&self, sol: &Solution) -> Vec<f64> {
        self.s.iter().map(|&v| sol.var_value(v).clamp(0.0, 1.0)).collect()
    }

    /// Adds violated linking rows until none remain (or the round cap).
    fn separate(&self, mut sol: Solution, lp_solves: &mut usize) -> Result<Option<Solution>> {
        for _ in 0..MAX_CUT_ROUNDS {
            let s = self.scores(&sol);
            let mut violated = Vec::new();
            for rows in &self.x {
                for vars in rows {
                    for (j, &v) in vars.iter().enumerate() {
                        if sol.var_value(v) > s[j] + LINK_TOL {
                            violated.push((v, self.s[j]));
                        }
                    }
                }
            }
            if violated.is_empty() {
                break;
            }
            for (v, sj) in violated {
                *lp_solves += 1;
                match outcome(sol.add_constraint(&[(v, 1.0), (sj, -1.0)][..], ComparisonOp::Le, 0.0))? {
                    Some(next) => sol = next,
                    None => return Ok(None),
                }
            }
        }
        Ok(Some(sol))
    }

    fn root(&self, pb: &Problem, lp_solves: &mut usize) -> Result<Solution> {
        *lp_solves += 1;
        let sol = outcome(pb.solve())?.ok_or_else(|| Error::internal("selection LP is infeasible"))?;
        self.separate(sol, lp_solves)?
            .ok_or_else(|| Error::internal("selection LP became infeasible"))
    }
}

/// The `k` largest scores (ties to the lower index), honouring fixings.
fn top_k(scores: &[f64], fixed: &[Option<bool>], k: usize) -> Vec<usize> {
    let mut forced: Vec<usize> = (0..scores.len()).filter(|&j| fixed[j] == Some(true)).collect();
    let mut free: Vec<usize> = (0..scores.len()).filter(|&j| fixed[j].is_none()).collect();
    // quantise so solver noise does not break exact ties
    let key = |j: usize| (scores[j] * 1e9).round() as i64;
    free.sort_by(|&a, &b| key(b).cmp(&key(a)).then(a.cmp(&b)));
    let need = k.saturating_sub(forced.len());
    forced.extend(free.into_iter().take(need));
    forced.sort_unstable();
    forced
}

/// Root LP, then top-`k` rounding evaluated exactly.
pub(crate) fn relax_and_round(costs: &PairCosts, k: usize, scenarios: &[Vec<f64>]) -> Result<RelaxOutcome> {
    let n = costs.len();
    let mut lp_solves = 0;
    let (pb, model) = Model::build(costs, k, scenarios);
    let sol = model.root(&pb, &mut lp_solves)?;
    let scores = model.scores(&sol);
    let selection = top_k(&scores, &vec![None; n], k);
    let cost = Evaluator::new(costs, scenarios).cost(&selection)?;
    Ok(RelaxOutcome {
        scores,
        selection,
        cost,
        bound: sol.objective(),
        lp_solves,
    })
}

struct Node {
    bound: f64,
    id: usize,
    parent: Rc<Solution>,
    fixed: Vec<Option<bool>>,
    edits: Vec<(usize, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Exact minimiser of the worst-case scenario cost over `k`-subsets, with
/// lexicographic tie-breaking on sorted index lists.
pub(crate) fn branch_and_bound(
    costs: &PairCosts,
    k: usize,
    scenarios: &[Vec<f64>],
    limits: &BnbLimits,
) -> Result<BnbOutcome> {
    let n = costs.len();
    let mut eval = Evaluator::new(costs, scenarios);
    if k == n {
        let all: Vec<usize> = (0..n).collect();
        let cost = eval.cost(&all)?;
        return Ok(BnbOutcome {
            selection: all,
            cost,
            root_bound: cost,
            nodes: 0,
            lp_solves: 0,
            optimal: true,
        });
    }

    let mut lp_solves = 0;
    let (pb, model) = Model::build(costs, k, scenarios);
    let root = model.root(&pb, &mut lp_solves)?;
    let root_bound = root.objective();
    let free = vec![None; n];
    let mut best = top_k(&model.scores(&root), &free, k);
    let mut best_cost = eval.cost(&best)?;

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut nodes = 0;
    let mut optimal = true;
    let mut pending = Some((root, free));

    loop {
        let (sol, fixed) = match pending.take() {
            Some(p) => p,
            None => {
                let Some(node) = heap.pop() else { break };
                let node: Node = node;
                if node.bound > best_cost + PRUNE_TOL {
                    continue;
                }
                if nodes >= limits.max_nodes {
                    optimal = false;
                    break;
                }
                let mut sol = Some((*node.parent).clone());
                for &(j, one) in &node.edits {
                    lp_solves += 1;
                    let cur = sol.take().expect("present until infeasible");
                    sol = outcome(cur.fix_var(model.s[j], if one { 1.0 } else { 0.0 }))?;
                    if sol.is_none() {
                        break;
                    }
                }
                let Some(sol) = sol else { continue };
                let Some(sol) = model.separate(sol, &mut lp_solves)? else { continue };
                (sol, node.fixed)
            }
        };
        nodes += 1;
        let bound = sol.objective();
        if bound > best_cost + PRUNE_TOL {
            continue;
        }
        let scores = model.scores(&sol);
        let rounded = top_k(&scores, &fixed, k);
        let rounded_cost = eval.cost(&rounded)?;
        if improves(rounded_cost, &rounded, best_cost, &best) {
            best = rounded;
            best_cost = rounded_cost;
        }

        let fractional = (0..n)
            .filter(|&j| fixed[j].is_none())
            .map(|j| (j, (scores[j] - 0.5).abs()))
            .filter(|&(_, d)| d < 0.5 - INTEGRALITY_TOL)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let parent = Rc::new(sol);
        let mut push = |fixed: Vec<Option<bool>>, edits: Vec<(usize, bool)>, heap: &mut BinaryHeap<Node>| {
            let ones = fixed.iter().filter(|f| **f == Some(true)).count();
            let zeros = fixed.iter().filter(|f| **f == Some(false)).count();
            if ones > k || n - zeros < k {
                return;
            }
            heap.push(Node {
                bound,
                id: next_id,
                parent: Rc::clone(&parent),
                fixed,
                edits,
            });
            next_id += 1;
        };

        match fractional {
            Some((j, _)) => {
                for one in [true, false] {
                    let mut f = fixed.clone();
                    f[j] = Some(one);
                    push(f, vec![(j, one)], &mut heap);
                }
            }
            None => {
                // Integral: the subtree holds no cheaper selection, but may
                // hold lexicographically smaller ties. Child `j` contains
                // exactly the subsets that agree with this one below `j`
                // and additionally pick `j`.
                let chosen: Vec<bool> = scores.iter().map(|&v| v > 0.5).collect();
                for j in (0..n).filter(|&j| fixed[j].is_none() && !chosen[j]) {
                    let mut f = fixed.clone();
                    let mut edits = Vec::new();
                    for (l, &c) in chosen.iter().enumerate().take(j) {
                        if f[l].is_none() {
                            f[l] = Some(c);
                            edits.push((l, c));
                        }
                    }
                    f[j] = Some(true);
                    edits.push((j, true));
                    push(f, edits, &mut heap);
                }
            }
        }
    }

    Ok(BnbOutcome {
        selection: best,
        cost: best_cost,
        root_bound,
        nodes,
        lp_solves,
        optimal,
    })
}
