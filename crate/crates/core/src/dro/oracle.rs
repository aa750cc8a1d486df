//! Brute-force minimax for tiny instances: every `K`-subset against every
//! distribution on the candidate points whose masses are multiples of
//! `1 / steps` and which lies in the ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{Exponent, PairCosts, SiteTable};
use crate::select::{binomial, guard, validate_budget, Combinations, ENUMERATION_LIMIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOracle {
    pub selection: Vec<usize>,
    /// `min_S max_Q W_p(Q, S)` over the grid ball, in `W_p` units.
    pub value: f64,
    /// Grid distributions inside the ball.
    pub ball_size: usize,
    pub steps: usize,
}

fn grid_points(n: usize, steps: usize, f: &mut dyn FnMut(&[f64]) -> Result<()>) -> Result<()> {
    fn rec(pos: usize, left: usize, counts: &mut [usize], steps: usize, f: &mut dyn FnMut(&[f64]) -> Result<()>) -> Result<()> {
        if pos == counts.len() - 1 {
            counts[pos] = left;
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            return f(&w);
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, steps, f)?;
        }
        Ok(())
    }
    rec(0, steps, &mut vec![0; n], steps, f)
}

/// Exhaustive grid minimax; ties go to the lexicographically smallest
/// subset. Refuses when either the subsets or the grid exceed
/// [`ENUMERATION_LIMIT`].
pub fn grid_minimax_oracle(table: &SiteTable, k: usize, p: Exponent, rho: f64, steps: usize) -> Result<GridOracle> {
    validate_budget(table, k)?;
    if steps == 0 {
        return Err(Error::input("grid resolution must be at least 1"));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::input(format!("radius must be a finite non-negative number, got {rho}")));
    }
    let n = table.len();
    guard(n, k)?;
    let grid = binomial(steps + n - 1, n - 1);
    if grid > ENUMERATION_LIMIT {
        return Err(Error::Guard(format!(
            "{grid} grid distributions exceeds the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    }
    let costs = PairCosts::new(table, p);
    let center = vec![1.0 / n as f64; n];
    let mut ball = Vec::new();
    grid_points(n, steps, &mut |w| {
        if p.root(costs.cost_dense(w, &center)?) <= rho + 1e-9 {
            ball.push(w.to_vec());
        }
        Ok(())
    })?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for sel in Combinations::new(n, k) {
        let mut worst = 0.0_f64;
        for q in &ball {
            worst = worst.max(costs.cost_to_uniform(q, &sel)?);
            if best.as_ref().is_some_and(|(_, b)| worst > *b) {
                break;
            }
        }
        if best.as_ref().map_or(true, |(_, b)| worst < *b) {
            best = Some((sel, worst));
        }
    }
    let (selection, cost) = best.expect("at least one subset");
    Ok(GridOracle {
        selection,
        value: p.root(cost),
        ball_size: ball.len(),
        steps,
    })
}
