use serde::{Deserialize, Serialize};

use super::cost::{pairwise_costs, CostMatrix, Exponent};
use super::distribution::{DiscreteDistribution, MASS_TOL};
use super::simplex;
use super::table::SiteTable;
use crate::error::{Error, Result};

/// Sparse optimal coupling between two distributions.
///
/// Row and column indices are positions in the supports of the two
/// distributions (equivalently, in the cost matrix), not site indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub triplets: Vec<(usize, usize, f64)>,
    pub cost: f64,
    /// Dual potentials on the rows and columns; zero-weight atoms get the
    /// c-transform of the other side.
    pub row_dual: Vec<f64>,
    pub col_dual: Vec<f64>,
}

impl TransportPlan {
    pub fn row_sums(&self, rows: usize) -> Vec<f64> {
        let mut sums = vec![0.0; rows];
        for &(i, _, m) in &self.triplets {
            sums[i] += m;
        }
        sums
    }

    pub fn col_sums(&self, cols: usize) -> Vec<f64> {
        let mut sums = vec![0.0; cols];
        for &(_, j, m) in &self.triplets {
            sums[j] += m;
        }
        sums
    }
}

/// Optimal transport plan for `cost` between `a` (rows) and `b` (columns).
pub fn solve_transport(
    cost: &CostMatrix,
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
) -> Result<TransportPlan> {
    let (n, m) = cost.shape();
    if n != a.len() || m != b.len() {
        return Err(Error::input(format!(
            "cost is {n}x{m} but marginals have {} and {} atoms",
            a.len(),
            b.len()
        )));
    }
    solve_dense(cost.as_slice(), n, m, a.weights(), b.weights())
}

/// Core entry point on raw slices. Zero atoms are pruned before solving and
/// their duals filled with c-transforms afterwards.
pub(crate) fn solve_dense(cost: &[f64], n: usize, m: usize, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if (sa - sb).abs() > MASS_TOL {
        return Err(Error::input(format!("infeasible marginals: masses {sa} and {sb}")));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| b[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::input("marginal with no positive mass"));
    }

    let supply: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let reduced: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost[i * m + j]))
        .collect();
    let sol = simplex::solve(&supply, &demand, &reduced)?;

    let mut row_dual = vec![f64::NAN; n];
    let mut col_dual = vec![f64::NAN; m];
    for (k, &i) in rows.iter().enumerate() {
        row_dual[i] = sol.row_dual[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        col_dual[j] = sol.col_dual[k];
    }
    for i in 0..n {
        if row_dual[i].is_nan() {
            row_dual[i] = cols
                .iter()
                .map(|&j| cost[i * m + j] - col_dual[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..m {
        if col_dual[j].is_nan() {
            col_dual[j] = rows
                .iter()
                .map(|&i| cost[i * m + j] - row_dual[i])
                .fold(f64::INFINITY, f64::min);
        }
    }
    let triplets = sol
        .flows
        .iter()
        .map(|&(r, c, f)| (rows[r], cols[c], f))
        .collect();
    Ok(TransportPlan {
        triplets,
        cost: sol.cost,
        row_dual,
        col_dual,
    })
}

fn same_atoms(a: &DiscreteDistribution, b: &DiscreteDistribution) -> bool {
    let (ca, cb) = (a.canonical(), b.canonical());
    ca.support() == cb.support() && ca.weights() == cb.weights()
}

/// `W_p(a, b)` where `a` lives on `table_a` and `b` on `table_b`.
pub fn wasserstein(
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
    table_a: &SiteTable,
    table_b: &SiteTable,
    p: Exponent,
) -> Result<f64> {
    a.check_range(table_a.len())?;
    b.check_range(table_b.len())?;
    if std::ptr::eq(table_a, table_b) && same_atoms(a, b) {
        return Ok(0.0);
    }
    let pa = table_a.covariates().select(ndarray::Axis(0), a.support());
    let pb = table_b.covariates().select(ndarray::Axis(0), b.support());
    let cost = pairwise_costs(pa.view(), pb.view(), p)?;
    let plan = solve_transport(&cost, a, b)?;
    Ok(p.root(plan.cost))
}

/// Full `n x n` cost matrix of one table, reused across many transport
/// solves between distributions on that table.
#[derive(Debug, Clone)]
pub struct PairCosts {
    n: usize,
    p: Exponent,
    full: Vec<f64>,
}

impl PairCosts {
    pub fn new(table: &SiteTable, p: Exponent) -> Self {
        let x = table.covariates();
        let cost = pairwise_costs(x, x, p).expect("validated table has finite covariates");
        PairCosts {
            n: table.len(),
            p,
            full: cost.as_slice().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn p(&self) -> Exponent {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.full[i * self.n + j]
    }

    /// Transport between dense weight vectors over all `n` sites.
    pub fn plan_dense(&self, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
        solve_dense(&self.full, self.n, self.n, a, b)
    }

    /// Transport cost (`W_p^p`) between dense weights over all sites.
    pub fn cost_dense(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        Ok(self.plan_dense(a, b)?.cost)
    }

    /// Transport plan from dense weights `a` to uniform mass on `sites`.
    /// Columns of the plan are positions in `sites`.
    pub fn plan_to_uniform(&self, a: &[f64], sites: &[usize]) -> Result<TransportPlan> {
        let k = sites.len();
        if k == 0 {
            return Err(Error::input("empty selection"));
        }
        let sub: Vec<f64> = (0..self.n)
            .flat_map(|i| sites.iter().map(move |&j| self.full[i * self.n + j]))
            .collect();
        let b = vec![1.0 / k as f64; k];
        solve_dense(&sub, self.n, k, a, &b)
    }

    /// `W_p^p` from dense weights `a` to uniform mass on `sites`.
    pub fn cost_to_uniform(&self, a: &[f64], sites: &[usize]) -> Result<f64> {
        Ok(self.plan_to_uniform(a, sites)?.cost)
    }
}
