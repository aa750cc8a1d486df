//! Nature's best response: a distribution on the candidate points, inside
//! the ball `W_p(Q, P) <= rho`, that maximises `W_p(Q, S)`.
//!
//! `Q -> W_p^p(Q, S)` is convex (an LP value linear in its right-hand side),
//! so ascent alternates two moves, both re-evaluated exactly:
//!
//! * a linearised step maximising the transport dual `sum_k u_k Q_k` over
//!   the ball, which never decreases the objective;
//! * greedy pairwise mass moves `i -> k` with increment `delta`, ranked by
//!   dual gain per dual budget estimate, halving `delta` on a stall.

use crate::error::Result;
use crate::ot::PairCosts;

/// Candidate moves evaluated exactly per greedy step.
const MOVES_PER_STEP: usize = 12;
/// Consecutive non-improving increments before the ascent stops.
const STALL_LIMIT: usize = 3;
const MAX_STEPS: usize = 500;
const GAIN_TOL: f64 = 1e-12;
/// Structured starts, ranked by initial value, that get a full ascent.
const SCREENED_STARTS: usize = 6;

pub(crate) struct Adversary<'a> {
    costs: &'a PairCosts,
    center: Vec<f64>,
    /// Ball radius in cost units, `rho^p`.
    budget: f64,
    rho: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Response {
    pub q: Vec<f64>,
    /// `W_p^p(Q, S)`.
    pub value: f64,
    /// `W_p^p(Q, P)`.
    pub distance: f64,
}

impl<'a> Adversary<'a> {
    pub fn new(costs: &'a PairCosts, center: Vec<f64>, rho: f64) -> Self {
        Adversary {
            costs,
            budget: costs.p().power(rho),
            center,
            rho,
        }
    }

    pub fn distance(&self, q: &[f64]) -> Result<f64> {
        self.costs.cost_dense(q, &self.center)
    }

    /// Ball membership on the `W_p` scale.
    pub fn admits(&self, distance_cost: f64) -> bool {
        self.costs.p().root(distance_cost) <= self.rho + 1e-9
    }

    /// Ball vertices that maximise simple linear scores: cost to the nearest
    /// selected site, mean cost to the selection (the point-mass values),
    /// cost towards or away from each selected site, and mass on each site.
    fn structured_starts(&self, sel: &[usize]) -> Vec<Vec<f64>> {
        let n = self.center.len();
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(2 + 2 * sel.len() + n);
        dirs.push(
            (0..n)
                .map(|k| sel.iter().map(|&j| self.costs.get(k, j)).fold(f64::INFINITY, f64::min))
                .collect(),
        );
        dirs.push(
            (0..n)
                .map(|k| sel.iter().map(|&j| self.costs.get(k, j)).sum::<f64>() / sel.len() as f64)
                .collect(),
        );
        for &j in sel {
            let toward: Vec<f64> = (0..n).map(|k| -self.costs.get(k, j)).collect();
            let away: Vec<f64> = toward.iter().map(|v| -v).collect();
            dirs.push(toward);
            dirs.push(away);
        }
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            dirs.push(e);
        }
        dirs.iter().map(|u| self.linear_max(u)).collect()
    }

    /// Best response to `sel`. Ascends from each given start (which must lie
    /// in the ball) and from the best [`SCREENED_STARTS`] structured starts
    /// by initial value; keeps the best.
    pub fn respond(&self, sel: &[usize], starts: &[Vec<f64>]) -> Result<Response> {
        let mut all = starts.to_vec();
        if self.budget > 0.0 {
            let mut screened: Vec<(f64, usize, Vec<f64>)> = Vec::new();
            for (i, q) in self.structured_starts(sel).into_iter().enumerate() {
                if self.admits(self.distance(&q)?) {
                    screened.push((self.costs.cost_to_uniform(&q, sel)?, i, q));
                }
            }
            screened.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            all.extend(screened.into_iter().take(SCREENED_STARTS).map(|(_, _, q)| q));
        }
        let mut best: Option<Response> = None;
        for start in &all {
            let r = self.ascend(start.clone(), sel)?;
            if best.as_ref().map_or(true, |b| r.value > b.value + GAIN_TOL) {
                best = Some(r);
            }
        }
        Ok(best.expect("at least one start"))
    }

    fn ascend(&self, mut q: Vec<f64>, sel: &[usize]) -> Result<Response> {
        let n = q.len();
        let mut value = self.costs.cost_to_uniform(&q, sel)?;
        let mut distance = self.distance(&q)?;
        if self.budget <= 0.0 {
            return Ok(Response { q, value, distance });
        }
        let mut delta = 1.0 / (4.0 * n as f64);
        let mut stalls = 0;
        for _ in 0..MAX_STEPS {
            let u = self.costs.plan_to_uniform(&q, sel)?.row_dual;

            let lin = self.linear_max(&u);
            let lin_value = self.costs.cost_to_uniform(&lin, sel)?;
            if lin_value > value + GAIN_TOL {
                let d = self.distance(&lin)?;
                if self.admits(d) {
                    q = lin;
                    value = lin_value;
                    distance = d;
                    continue;
                }
            }

            match self.greedy_move(&q, &u, sel, delta, value)? {
                Some((next, v, d)) => {
                    q = next;
                    value = v;
                    distance = d;
                    stalls = 0;
                }
                None => {
                    stalls += 1;
                    if stalls >= STALL_LIMIT {
                        break;
                    }
                    delta /= 2.0;
                }
            }
        }
        Ok(Response { q, value, distance })
    }

    fn greedy_move(
        &self,
        q: &[f64],
        u: &[f64],
        sel: &[usize],
        delta: f64,
        value: f64,
    ) -> Result<Option<(Vec<f64>, f64, f64)>> {
        let n = q.len();
        let a = self.costs.plan_dense(q, &self.center)?.row_dual;
        let mut moves: Vec<(f64, usize, usize)> = Vec::new();
        for i in (0..n).filter(|&i| q[i] > 0.0) {
            for k in (0..n).filter(|&k| k != i) {
                let gain = u[k] - u[i];
                if gain <= GAIN_TOL {
                    continue;
                }
                let spend = a[k] - a[i];
                let score = if spend > GAIN_TOL { gain / spend } else { gain * 1e12 };
                moves.push((score, i, k));
            }
        }
        moves.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        for &(_, i, k) in moves.iter().take(MOVES_PER_STEP) {
            let m = delta.min(q[i]);
            let mut next = q.to_vec();
            next[i] -= m;
            next[k] += m;
            if next[i] < 1e-15 {
                next[k] += next[i];
                next[i] = 0.0;
            }
            let d = self.distance(&next)?;
            if !self.admits(d) {
                continue;
            }
            let v = self.costs.cost_to_uniform(&next, sel)?;
            let bar = best.as_ref().map_or(value, |b| b.1);
            if v > bar + GAIN_TOL {
                best = Some((next, v, d));
            }
        }
        Ok(best)
    }

    /// `argmax_Q sum_k u_k Q_k` over couplings of the centre whose cost stays
    /// within the budget: a multiple-choice knapsack LP, solved exactly by
    /// filling the upper concave hull segments of every row in slope order.
    fn linear_max(&self, u: &[f64]) -> Vec<f64> {
        let n = self.center.len();
        // per row: hull vertices (cost, gain, destination)
        let mut hulls: Vec<Vec<(f64, f64, usize)>> = Vec::with_capacity(n);
        for l in 0..n {
            let mut pts: Vec<(f64, f64, usize)> = (0..n).map(|k| (self.costs.get(l, k), u[k], k)).collect();
            pts.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)).then(x.2.cmp(&y.2)));
            let mut hull: Vec<(f64, f64, usize)> = Vec::new();
            for pt in pts {
                if let Some(last) = hull.last() {
                    if pt.1 <= last.1 + GAIN_TOL || pt.0 <= last.0 {
                        continue;
                    }
                }
                while hull.len() >= 2 {
                    let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                    let s_ab = (b.1 - a.1) / (b.0 - a.0);
                    let s_bp = (pt.1 - b.1) / (pt.0 - b.0);
                    if s_ab <= s_bp {
                        hull.pop();
                    } else {
                        break;
                    }
                }
                hull.push(pt);
            }
            hulls.push(hull);
        }

        let mut segments: Vec<(f64, usize, usize)> = Vec::new();
        for (l, hull) in hulls.iter().enumerate() {
            for s in 1..hull.len() {
                let slope = (hull[s].1 - hull[s - 1].1) / (hull[s].0 - hull[s - 1].0);
                segments.push((slope, l, s));
            }
        }
        // within a row slopes decrease, so slope order respects hull order
        segments.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

        let mut position = vec![0usize; n];
        let mut split: Option<(usize, f64)> = None;
        let mut left = self.budget;
        for &(_, l, s) in &segments {
            if left <= 0.0 {
                break;
            }
            if position[l] != s - 1 {
                continue;
            }
            let w = self.center[l];
            let need = w * (hulls[l][s].0 - hulls[l][s - 1].0);
            if need <= left {
                left -= need;
                position[l] = s;
            } else {
                split = Some((l, left / need));
                left = 0.0;
            }
        }

        let mut q = vec![0.0; n];
        for l in 0..n {
            let w = self.center[l];
            let here = hulls[l][position[l]].2;
            match split {
                Some((sl, frac)) if sl == l => {
                    let there = hulls[l][position[l] + 1].2;
                    q[here] += w * (1.0 - frac);
                    q[there] += w * frac;
                }
                _ => q[here] += w,
            }
        }
        q
    }
}
