//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sitesel::ot::{Exponent, PairCosts, SiteTable};
use sitesel::select::Combinations;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` standard Gaussian points in `d` dimensions.
pub fn gaussian_table(n: usize, d: usize, seed: u64) -> SiteTable {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    SiteTable::from_rows(&rows).unwrap()
}

/// Two tight Gaussian clusters centred at `(-3, 0)` and `(3, 0)`.
pub fn two_clusters(n: usize, seed: u64) -> SiteTable {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let cx = if i % 2 == 0 { -3.0 } else { 3.0 };
            let dx: f64 = r.sample(StandardNormal);
            let dy: f64 = r.sample(StandardNormal);
            vec![cx + 0.5 * dx, 0.5 * dy]
        })
        .collect();
    SiteTable::from_rows(&rows).unwrap()
}

pub fn line4() -> SiteTable {
    SiteTable::from_line(&[0.0, 1.0, 2.0, 3.0]).unwrap()
}

/// Calls `f` with every weight vector over `n` atoms whose entries are
/// multiples of `1 / steps`.
pub fn for_each_grid_distribution(n: usize, steps: usize, mut f: impl FnMut(&[f64])) {
    fn rec(pos: usize, left: usize, counts: &mut Vec<usize>, steps: usize, f: &mut dyn FnMut(&[f64])) {
        let n = counts.len();
        if pos == n - 1 {
            counts[pos] = left;
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            f(&w);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, steps, f);
        }
    }
    let mut counts = vec![0; n];
    rec(0, steps, &mut counts, steps, &mut f);
}

/// Grid distributions inside the `W_p` ball of radius `rho` around uniform.
pub fn grid_ball(costs: &PairCosts, rho: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = costs.len();
    let center = vec![1.0 / n as f64; n];
    let mut out = Vec::new();
    for_each_grid_distribution(n, steps, |w| {
        let d = costs.cost_dense(w, &center).unwrap();
        if costs.p().root(d) <= rho + 1e-8 {
            out.push(w.to_vec());
        }
    });
    out
}

/// Best grid adversary value `max_Q W_p(Q, S)` for a fixed selection.
pub fn grid_adversary(costs: &PairCosts, ball: &[Vec<f64>], sel: &[usize]) -> f64 {
    let p = costs.p();
    ball.iter()
        .map(|q| p.root(costs.cost_to_uniform(q, sel).unwrap()))
        .fold(0.0, f64::max)
}

/// `min_S max_{Q in grid ball} W_p(Q, S)` with the minimising subset.
pub fn double_brute_force(table: &SiteTable, k: usize, p: Exponent, rho: f64, steps: usize) -> (Vec<usize>, f64) {
    let costs = PairCosts::new(table, p);
    let ball = grid_ball(&costs, rho, steps);
    let mut best = (Vec::new(), f64::INFINITY);
    for sel in Combinations::new(table.len(), k) {
        let v = grid_adversary(&costs, &ball, &sel);
        if v < best.1 - 1e-12 {
            best = (sel, v);
        }
    }
    best
}

/// Pairwise distance quantile (type 7) of a table.
pub fn distance_quantile(table: &SiteTable, q: f64) -> f64 {
    let mut d = Vec::new();
    let x = table.covariates();
    for i in 0..table.len() {
        for j in i + 1..table.len() {
            let s: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let h = (d.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    d[lo] + (h - lo as f64) * (d[hi] - d[lo])
}

/// Minimum transport cost over the vertices of the transport polytope
/// (at most 16 atoms a side).
///
/// Every vertex has forest support, so it is produced by repeatedly picking
/// a cell `(i, j)`, shipping `min(a_i, b_j)` and retiring the exhausted
/// side (a leaf of the forest). The recursion walks all such elimination
/// orders, memoised on the residual state.
pub fn vertex_enumeration_cost(cost: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    use std::collections::HashMap;
    type Key = (u16, u16, [u64; 32]);
    struct Walk<'a> {
        cost: &'a [Vec<f64>],
        memo: HashMap<Key, f64>,
    }
    impl Walk<'_> {
        fn go(&mut self, a: &mut [f64], b: &mut [f64], rows: u16, cols: u16) -> f64 {
            let bits = |mask: u16| (0..16).filter(move |&i| mask >> i & 1 == 1);
            if rows.count_ones() == 1 {
                let i = rows.trailing_zeros() as usize;
                return bits(cols).map(|j| self.cost[i][j] * b[j]).sum();
            }
            if cols.count_ones() == 1 {
                let j = cols.trailing_zeros() as usize;
                return bits(rows).map(|i| self.cost[i][j] * a[i]).sum();
            }
            let mut key: Key = (rows, cols, [0; 32]);
            for i in bits(rows) {
                key.2[i] = a[i].to_bits();
            }
            for j in bits(cols) {
                key.2[16 + j] = b[j].to_bits();
            }
            if let Some(&v) = self.memo.get(&key) {
                return v;
            }
            let mut best = f64::INFINITY;
            for i in bits(rows) {
                for j in bits(cols) {
                    let (ai, bj) = (a[i], b[j]);
                    let v = if ai <= bj {
                        b[j] = bj - ai;
                        let rest = self.go(a, b, rows & !(1 << i), cols);
                        b[j] = bj;
                        self.cost[i][j] * ai + rest
                    } else {
                        a[i] = ai - bj;
                        let rest = self.go(a, b, rows, cols & !(1 << j));
                        a[i] = ai;
                        self.cost[i][j] * bj + rest
                    };
                    best = best.min(v);
                }
            }
            self.memo.insert(key, best);
            best
        }
    }
    assert!(a.len() <= 16 && b.len() <= 16);
    let mut walk = Walk { cost, memo: HashMap::new() };
    let rows = ((1u32 << a.len()) - 1) as u16;
    let cols = ((1u32 << b.len()) - 1) as u16;
    walk.go(&mut a.to_vec(), &mut b.to_vec(), rows, cols)
}

/// Random probability vector with `n` strictly positive entries.
pub fn random_simplex(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}
