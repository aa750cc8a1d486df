use super::bnb::improves;
use crate::error::{Error, Result};
use crate::ot::PairCosts;

/// Largest subset count the enumeration oracles accept.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Combinations { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for l in i + 1..k {
                    next[l] = next[l - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

pub(crate) fn guard(n: usize, k: usize) -> Result<()> {
    let count = binomial(n, k);
    if count > ENUMERATION_LIMIT {
        return Err(Error::Guard(format!(
            "C({n}, {k}) = {count} subsets exceeds the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    }
    Ok(())
}

/// Exhaustive minimiser of the worst-case scenario cost; ties go to the
/// lexicographically smallest subset. Returns `(selection, cost)`.
pub(crate) fn enumerate_min(costs: &PairCosts, k: usize, scenarios: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    guard(costs.len(), k)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for sel in Combinations::new(costs.len(), k) {
        let mut worst = 0.0_f64;
        let mut pruned = false;
        for q in scenarios {
            worst = worst.max(costs.cost_to_uniform(q, &sel)?);
            // later subsets are lexicographically larger, so only strict
            // improvements matter
            if let Some((_, b)) = &best {
                if worst > *b + super::bnb::TIE_TOL {
                    pruned = true;
                    break;
                }
            }
        }
        if pruned {
            continue;
        }
        match &best {
            Some((bs, bc)) if !improves(worst, &sel, *bc, bs) => {}
            _ => best = Some((sel, worst)),
        }
    }
    best.ok_or_else(|| Error::input("no subsets to enumerate"))
}

/// Lower bound on the transport cost from `q` to the uniform distribution
/// on `sel`: every supplied unit travels at least to its nearest selected
/// site, and every received unit comes at least from its nearest supported
/// atom.
fn transport_lower_bound(costs: &PairCosts, q: &[f64], sel: &[usize]) -> f64 {
    let mut rows = 0.0;
    let mut cols = vec![f64::INFINITY; sel.len()];
    for (i, &w) in q.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let mut nearest = f64::INFINITY;
        for (slot, &j) in sel.iter().enumerate() {
            let c = costs.get(i, j);
            nearest = nearest.min(c);
            cols[slot] = cols[slot].min(c);
        }
        rows += w * nearest;
    }
    let cols = cols.iter().sum::<f64>() / sel.len() as f64;
    rows.max(cols)
}

/// Enumeration for a scenario set that only grows: each subset keeps a lower
/// bound on its worst cost, exact over its first `evaluated` scenarios and
/// from `transport_lower_bound` over the first `bounded` ones.
#[derive(Debug, Clone)]
pub(crate) struct IncrementalMinMax {
    subsets: Vec<Vec<usize>>,
    worst: Vec<f64>,
    evaluated: Vec<usize>,
    bounded: Vec<usize>,
}

impl IncrementalMinMax {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        guard(n, k)?;
        let subsets: Vec<Vec<usize>> = Combinations::new(n, k).collect();
        let m = subsets.len();
        Ok(IncrementalMinMax {
            subsets,
            worst: vec![0.0; m],
            evaluated: vec![0; m],
            bounded: vec![0; m],
        })
    }

    /// Exact `argmin_S max_q cost(q, S)` over all subsets.
    pub fn solve(&mut self, costs: &PairCosts, scenarios: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
        for idx in 0..self.subsets.len() {
            for q in &scenarios[self.bounded[idx].max(self.evaluated[idx])..] {
                self.worst[idx] = self.worst[idx].max(transport_lower_bound(costs, q, &self.subsets[idx]));
            }
            self.bounded[idx] = scenarios.len();
        }
        // visit in order of current lower bound so the incumbent tightens fast
        let mut order: Vec<usize> = (0..self.subsets.len()).collect();
        order.sort_unstable_by(|&a, &b| self.worst[a].total_cmp(&self.worst[b]).then(a.cmp(&b)));
        let mut best: Option<usize> = None;
        let mut best_cost = f64::INFINITY;
        for idx in order {
            if self.worst[idx] > best_cost + super::bnb::TIE_TOL {
                break;
            }
            while self.evaluated[idx] < scenarios.len() {
                let c = costs.cost_to_uniform(&scenarios[self.evaluated[idx]], &self.subsets[idx])?;
                self.worst[idx] = self.worst[idx].max(c);
                self.evaluated[idx] += 1;
                if self.worst[idx] > best_cost + super::bnb::TIE_TOL {
                    break;
                }
            }
            if self.evaluated[idx] < scenarios.len() {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => improves(self.worst[idx], &self.subsets[idx], best_cost, &self.subsets[b]),
            };
            if better {
                best = Some(idx);
                best_cost = self.worst[idx];
            }
        }
        let b = best.ok_or_else(|| Error::input("no subsets to enumerate"))?;
        Ok((self.subsets[b].clone(), best_cost))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_in_lex_order() {
        let all: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(Combinations::new(3, 3).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(binomial(12, 5), Combinations::new(12, 5).count() as u128);
        assert_eq!(binomial(100, 50), 100891344545564193334812497256);
    }
}
