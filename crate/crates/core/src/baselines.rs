//! Comparison baselines: uniform random subsets, k-means stratified
//! sampling, and brute-force comparators for the survey-sampling
//! equivalences (balanced stratification and 1-Lipschitz discrepancy).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{euclidean, DiscreteDistribution, Exponent, PairCosts, SiteTable};
use crate::select::{validate_budget, Selection};

const KMEANS_MAX_ITER: usize = 50;
const KMEANS_RESEEDS: u64 = 5;
/// Largest ordered balanced-partition count the stratification oracle scans.
pub const STRATIFICATION_LIMIT: u128 = 1_000_000;

fn objective(costs: &PairCosts, indices: &[usize]) -> Result<f64> {
    let n = costs.len();
    let mut s = indices.to_vec();
    s.sort_unstable();
    Ok(costs.p().root(costs.cost_to_uniform(&vec![1.0 / n as f64; n], &s)?))
}

/// `trials` independent uniform `k`-subsets. Trial `t` draws from the
/// ChaCha8 stream `t` of `seed`, so trials are order-independent.
pub fn random_select(table: &SiteTable, k: usize, p: Exponent, seed: u64, trials: usize) -> Result<Vec<Selection>> {
    validate_budget(table, k)?;
    if trials == 0 {
        return Err(Error::input("random baseline needs at least one trial"));
    }
    let n = table.len();
    let costs = PairCosts::new(table, p);
    (0..trials)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let indices = sample(&mut rng, n, k).into_vec();
            let obj = objective(&costs, &indices)?;
            Ok(Selection::new(indices, obj, p, "random"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedPlan {
    /// Stratum label of every site, in `0..k`.
    pub assignments: Vec<usize>,
    /// `k` rows of `d` coordinates.
    pub centroids: Vec<Vec<f64>>,
    /// `chosen[j]` is a site with label `j`.
    pub chosen: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // float slack can land on a zero-weight tail
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // all remaining points coincide with a centre
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (i, x) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &points[next]));
        }
    }
    chosen.iter().map(|&i| points[i].clone()).collect()
}

fn centroids_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (x, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

/// Lloyd iterations from a k-means++ start; `None` if a cluster empties.
fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Option<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut centroids = kmeans_pp_init(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|x| nearest(x, &centroids)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let (next, counts) = centroids_of(points, &labels, k);
        if counts.contains(&0) {
            return None;
        }
        centroids = next;
        let relabel: Vec<usize> = points.iter().map(|x| nearest(x, &centroids)).collect();
        if relabel == labels {
            break;
        }
        labels = relabel;
    }
    let (centroids, counts) = centroids_of(points, &labels, k);
    (!counts.contains(&0)).then_some((labels, centroids))
}

/// Fills each empty stratum with the point of the largest stratum farthest
/// from that stratum's centroid.
fn split_largest(points: &[Vec<f64>], labels: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    loop {
        let (centroids, counts) = centroids_of(points, labels, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return centroids;
        };
        let largest = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).expect("k >= 1");
        let far = (0..points.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[largest])
                    .total_cmp(&sq_dist(&points[b], &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .expect("largest stratum is nonempty");
        labels[far] = empty;
    }
}

/// k-means strata with `k = K` and one uniform draw per stratum.
pub fn stratified_select(table: &SiteTable, k: usize, p: Exponent, seed: u64) -> Result<(Selection, StratifiedPlan)> {
    validate_budget(table, k)?;
    let n = table.len();
    let points: Vec<Vec<f64>> = (0..n).map(|i| table.row(i).to_vec()).collect();
    let mut found = None;
    for attempt in 0..KMEANS_RESEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        if let Some(fit) = lloyd(&points, k, &mut rng) {
            found = Some(fit);
            break;
        }
    }
    let (assignments, centroids) = match found {
        Some(fit) => fit,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = kmeans_pp_init(&points, k, &mut rng);
            let mut labels: Vec<usize> = points.iter().map(|x| nearest(x, &init)).collect();
            let centroids = split_largest(&points, &mut labels, k);
            (labels, centroids)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(KMEANS_RESEEDS);
    let chosen: Vec<usize> = (0..k)
        .map(|j| {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == j).collect();
            members[rng.gen_range(0..members.len())]
        })
        .collect();
    let costs = PairCosts::new(table, p);
    let obj = objective(&costs, &chosen)?;
    let selection = Selection::new(chosen.clone(), obj, p, "stratified");
    Ok((selection, StratifiedPlan { assignments, centroids, chosen }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedStratification {
    /// `sum_j sum_{i in C_j} ||x_i - x_{r_j}||^2`.
    pub objective: f64,
    /// `K` strata of `n / K` sites each.
    pub partition: Vec<Vec<usize>>,
    /// Distinct population sites, one per stratum.
    pub representatives: Vec<usize>,
}

/// `n! / ((n/k)!)^k`, saturating.
fn multinomial_balanced(n: usize, k: usize) -> u128 {
    let m = n / k;
    let mut acc: u128 = 1;
    let mut remaining = n;
    for _ in 0..k {
        let c = crate::select::binomial(remaining, m);
        acc = match acc.checked_mul(c) {
            Some(v) => v,
            None => return u128::MAX,
        };
        remaining -= m;
    }
    acc
}

/// Cheapest assignment of distinct representatives to strata, by a
/// subset DP over strata. `group_cost[j][r]` is the cost of stratum `j`
/// served by site `r`.
fn assign_representatives(group_cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let k = group_cost.len();
    let n = group_cost[0].len();
    let full = (1usize << k) - 1;
    // dp[r][mask]: strata in `mask` served by distinct sites among `0..r`
    let mut dp = vec![vec![f64::INFINITY; 1 << k]; n + 1];
    let mut choice = vec![vec![usize::MAX; 1 << k]; n + 1];
    dp[0][0] = 0.0;
    for r in 0..n {
        for mask in 0..=full {
            let mut v = dp[r][mask];
            let mut pick = usize::MAX;
            for (j, costs) in group_cost.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    let c = dp[r][mask & !(1 << j)] + costs[r];
                    if c < v {
                        v = c;
                        pick = j;
                    }
                }
            }
            dp[r + 1][mask] = v;
            choice[r + 1][mask] = pick;
        }
    }
    let mut reps = vec![0; k];
    let mut mask = full;
    for r in (1..=n).rev() {
        let j = choice[r][mask];
        if j != usize::MAX {
            reps[j] = r - 1;
            mask &= !(1 << j);
        }
    }
    (dp[n][full], reps)
}

/// Exhaustive optimum over balanced partitions into `k` strata and distinct
/// in-population representatives. Equals `n * W_2^2` of the exact `p = 2`
/// selection.
pub fn balanced_stratification_oracle(table: &SiteTable, k: usize) -> Result<BalancedStratification> {
    validate_budget(table, k)?;
    let n = table.len();
    if n % k != 0 {
        return Err(Error::input(format!("{n} sites cannot be split into {k} equal strata")));
    }
    let count = multinomial_balanced(n, k);
    if count > STRATIFICATION_LIMIT {
        return Err(Error::Guard(format!(
            "{count} balanced partitions exceeds the stratification limit of {STRATIFICATION_LIMIT}"
        )));
    }
    let costs = PairCosts::new(table, Exponent::Two);
    let m = n / k;
    let mut best: Option<BalancedStratification> = None;
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut used = vec![false; n];
    search(&costs, m, &mut groups, &mut used, &mut best);
    best.ok_or_else(|| Error::internal("no balanced partition found"))
}

fn search(
    costs: &PairCosts,
    m: usize,
    groups: &mut Vec<Vec<usize>>,
    used: &mut [bool],
    best: &mut Option<BalancedStratification>,
) {
    let n = used.len();
    let Some(first) = used.iter().position(|u| !u) else {
        let group_cost: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| (0..n).map(|r| g.iter().map(|&i| costs.get(i, r)).sum()).collect())
            .collect();
        let (objective, representatives) = assign_representatives(&group_cost);
        if best.as_ref().map_or(true, |b| objective < b.objective - 1e-12) {
            *best = Some(BalancedStratification {
                objective,
                partition: groups.clone(),
                representatives,
            });
        }
        return;
    };
    // the lowest unused site opens the next stratum, so strata are unordered
    used[first] = true;
    let mut group = vec![first];
    extend(costs, m, first + 1, &mut group, groups, used, best);
    used[first] = false;
}

fn extend(
    costs: &PairCosts,
    m: usize,
    from: usize,
    group: &mut Vec<usize>,
    groups: &mut Vec<Vec<usize>>,
    used: &mut [bool],
    best: &mut Option<BalancedStratification>,
) {
    if group.len() == m {
        groups.push(group.clone());
        search(costs, m, groups, used, best);
        groups.pop();
        return;
    }
    for i in from..used.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        group.push(i);
        extend(costs, m, i + 1, group, groups, used, best);
        group.pop();
        used[i] = false;
    }
}

/// `max |E_P f - E_S f|` over sampled 1-Lipschitz functions
/// `f(x) = min_i (c_i + ||x - z_i||)` with centres `z_i` on the table.
/// The first functions are single cones at each site; the rest are random
/// envelopes. Never exceeds `W_1(P, S)`.
pub fn lipschitz_discrepancy(
    p: &DiscreteDistribution,
    s: &DiscreteDistribution,
    table: &SiteTable,
    n_functions: usize,
    seed: u64,
) -> Result<f64> {
    if n_functions == 0 {
        return Err(Error::input("discrepancy needs at least one test function"));
    }
    let n = table.len();
    p.check_range(n)?;
    s.check_range(n)?;
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(table.row(i), table.row(j))).collect())
        .collect();
    let diameter = dist.iter().flatten().copied().fold(0.0, f64::max);
    let (pd, sd) = (p.to_dense(n), s.to_dense(n));
    let gap = |f: &[f64]| -> f64 {
        let ep: f64 = f.iter().zip(&pd).map(|(a, b)| a * b).sum();
        let es: f64 = f.iter().zip(&sd).map(|(a, b)| a * b).sum();
        (ep - es).abs()
    };

    let mut best = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..n_functions {
        let f: Vec<f64> = if t < n {
            dist[t].clone()
        } else {
            let m = rng.gen_range(1..=n);
            let centres = sample(&mut rng, n, m).into_vec();
            let offsets: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * diameter).collect();
            (0..n)
                .map(|x| {
                    centres
                        .iter()
                        .zip(&offsets)
                        .map(|(&z, &c)| c + dist[x][z])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        };
        best = best.max(gap(&f));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_budget_selects_everything() {
        let t = SiteTable::from_line(&[0.0, 1.0, 5.0]).unwrap();
        for s in random_select(&t, 3, Exponent::One, 7, 4).unwrap() {
            assert_eq!(s.indices, vec![0, 1, 2]);
        }
        let (sel, plan) = stratified_select(&t, 3, Exponent::Two, 7).unwrap();
        assert_eq!(sel.indices, vec![0, 1, 2]);
        let mut labels = plan.assignments.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_points_still_fill_strata() {
        let t = SiteTable::from_line(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let (_, plan) = stratified_select(&t, 3, Exponent::Two, 0).unwrap();
        for j in 0..3 {
            assert!(plan.assignments.contains(&j));
            assert_eq!(plan.assignments[plan.chosen[j]], j);
        }
    }

    #[test]
    fn stratification_examples() {
        let two = SiteTable::from_line(&[0.0, 3.0]).unwrap();
        assert_eq!(balanced_stratification_oracle(&two, 2).unwrap().objective, 0.0);
        let line = SiteTable::from_line(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let b = balanced_stratification_oracle(&line, 2).unwrap();
        assert!((b.objective - 2.0).abs() < 1e-12);
        assert_eq!(b.partition, vec![vec![0, 1], vec![2, 3]]);
        assert!(matches!(balanced_stratification_oracle(&line, 3), Err(Error::Input(_))));
    }

    #[test]
    fn stratification_guard() {
        let coords: Vec<f64> = (0..24).map(f64::from).collect();
        let t = SiteTable::from_line(&coords).unwrap();
        assert!(matches!(balanced_stratification_oracle(&t, 3), Err(Error::Guard(_))));
    }

    #[test]
    fn cone_is_tight_for_point_masses() {
        let t = SiteTable::from_line(&[0.0, 2.5]).unwrap();
        let p = DiscreteDistribution::new(vec![0], vec![1.0]).unwrap();
        let s = DiscreteDistribution::new(vec![1], vec![1.0]).unwrap();
        let d = lipschitz_discrepancy(&p, &s, &t, 1, 0).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
        assert_eq!(lipschitz_discrepancy(&p, &p, &t, 10, 0).unwrap(), 0.0);
    }
}
