//! Primal network simplex specialised to the dense transportation problem.
//!
//! Nodes `0..n` are sources, `n..n+m` are sinks and `n+m` is an artificial
//! root. Every source starts attached to the root by an up-arc carrying its
//! supply, every sink by a down-arc carrying its demand, so the starting tree
//! is strongly feasible. The leaving-arc rule keeps it that way, which rules
//! out cycling on the highly degenerate uniform-marginal instances used by
//! site selection.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct TransportSolution {
    /// `(row, col, mass)` for every real tree arc carrying positive flow,
    /// sorted row-major.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
    /// Dual variables `u` (rows) and `v` (columns) with `u_i + v_j <= c_ij`.
    pub row_dual: Vec<f64>,
    pub col_dual: Vec<f64>,
}

struct Network<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    art_cost: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    tree_adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl<'a> Network<'a> {
    fn root(&self) -> usize {
        self.n + self.m
    }

    fn real_arcs(&self) -> usize {
        self.n * self.m
    }

    fn endpoints(&self, e: usize) -> (usize, usize) {
        let real = self.real_arcs();
        if e < real {
            (e / self.m, self.n + e % self.m)
        } else {
            let u = e - real;
            if u < self.n {
                (u, self.root())
            } else {
                (self.root(), u)
            }
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        let real = self.real_arcs();
        if e < real {
            self.cost[e]
        } else if e - real < self.n {
            0.0
        } else {
            self.art_cost
        }
    }

    /// Recomputes parent, depth and potentials from the tree adjacency.
    fn rebuild(&mut self) {
        let root = self.root();
        let nodes = root + 1;
        self.parent.iter_mut().for_each(|p| *p = NONE);
        self.parent[root] = root;
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut stack = Vec::with_capacity(nodes);
        stack.push(root);
        while let Some(u) = stack.pop() {
            for k in 0..self.tree_adj[u].len() {
                let e = self.tree_adj[u][k];
                let (s, t) = self.endpoints(e);
                let (v, up) = if s == u { (t, false) } else { (s, true) };
                if self.parent[v] != NONE {
                    continue;
                }
                self.parent[v] = u;
                self.pred[v] = e;
                self.pred_up[v] = up;
                self.depth[v] = self.depth[u] + 1;
                // tree arcs have zero reduced cost: c + pi_src - pi_dst = 0
                let c = self.arc_cost(e);
                self.pi[v] = if up { self.pi[u] - c } else { self.pi[u] + c };
                stack.push(v);
            }
        }
    }

    fn remove_tree_arc(&mut self, e: usize) {
        let (s, t) = self.endpoints(e);
        for node in [s, t] {
            let adj = &mut self.tree_adj[node];
            if let Some(pos) = adj.iter().position(|&x| x == e) {
                adj.swap_remove(pos);
            }
        }
        self.in_tree[e] = false;
    }

    fn add_tree_arc(&mut self, e: usize) {
        let (s, t) = self.endpoints(e);
        self.tree_adj[s].push(e);
        self.tree_adj[t].push(e);
        self.in_tree[e] = true;
    }

    fn entering_arc(&self, tol: f64) -> Option<usize> {
        let mut best = None;
        let mut best_rc = -tol;
        for i in 0..self.n {
            let pi_i = self.pi[i];
            let row = &self.cost[i * self.m..(i + 1) * self.m];
            for (j, &c) in row.iter().enumerate() {
                let e = i * self.m + j;
                if self.in_tree[e] {
                    continue;
                }
                let rc = c + pi_i - self.pi[self.n + j];
                if rc < best_rc {
                    best_rc = rc;
                    best = Some(e);
                }
            }
        }
        best
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    /// One pivot on entering arc `e_in` (currently at zero flow).
    fn pivot(&mut self, e_in: usize) -> Result<()> {
        let (first, second) = self.endpoints(e_in);
        let join = self.join(first, second);

        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut u = first;
        while u != join {
            if self.pred_up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.pred_up[u] {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                }
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(Error::internal("transport network simplex found an unbounded cycle"));
        }

        if delta > 0.0 {
            self.flow[e_in] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                if self.pred_up[u] {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                if self.pred_up[u] {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }
        let e_out = self.pred[u_out];
        self.flow[e_out] = 0.0;
        self.remove_tree_arc(e_out);
        self.add_tree_arc(e_in);
        self.rebuild();
        Ok(())
    }
}

/// Solves `min sum c_ij x_ij` subject to row sums `supply` and column sums
/// `demand`, `x >= 0`. `cost` is row-major `supply.len() x demand.len()`.
///
/// All supplies and demands must be strictly positive; callers prune zero
/// atoms first.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(Error::input("transport problem with an empty marginal"));
    }
    if cost.len() != n * m {
        return Err(Error::input(format!(
            "cost has {} entries, expected {}x{}",
            cost.len(),
            n,
            m
        )));
    }
    let max_c = cost.iter().fold(0.0_f64, |acc, &c| acc.max(c));
    let art_cost = (max_c + 1.0) * (n + m) as f64;
    let nodes = n + m + 1;
    let arcs = n * m + n + m;

    let mut net = Network {
        n,
        m,
        cost,
        art_cost,
        flow: vec![0.0; arcs],
        in_tree: vec![false; arcs],
        tree_adj: vec![Vec::new(); nodes],
        parent: vec![NONE; nodes],
        pred: vec![NONE; nodes],
        pred_up: vec![false; nodes],
        depth: vec![0; nodes],
        pi: vec![0.0; nodes],
    };
    for (i, &a) in supply.iter().enumerate() {
        let e = n * m + i;
        net.flow[e] = a;
        net.add_tree_arc(e);
    }
    for (j, &b) in demand.iter().enumerate() {
        let e = n * m + n + j;
        net.flow[e] = b;
        net.add_tree_arc(e);
    }
    net.rebuild();

    let tol = 1e-12 * (1.0 + max_c);
    let max_pivots = 50 * (n * m + n + m) + 1000;
    let mut pivots = 0;
    while let Some(e_in) = net.entering_arc(tol) {
        net.pivot(e_in)?;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::internal(format!(
                "transport network simplex exceeded {max_pivots} pivots"
            )));
        }
    }

    let total: f64 = supply.iter().sum::<f64>().max(demand.iter().sum::<f64>());
    let artificial: f64 = net.flow[n * m..].iter().sum();
    if artificial > 1e-7 * total.max(1.0) {
        return Err(Error::input(format!(
            "transport marginals are infeasible (residual artificial flow {artificial:.3e})"
        )));
    }

    let mut flows = Vec::with_capacity(n + m);
    let mut total_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let e = i * m + j;
            let f = net.flow[e];
            if net.in_tree[e] && f > 0.0 {
                flows.push((i, j, f));
                total_cost += f * cost[e];
            }
        }
    }
    // shift so that v_0 = 0; valid because both marginals carry equal mass
    let shift = net.pi[n];
    let row_dual = (0..n).map(|i| shift - net.pi[i]).collect();
    let col_dual = (0..m).map(|j| net.pi[n + j] - shift).collect();
    Ok(TransportSolution {
        flows,
        cost: total_cost,
        row_dual,
        col_dual,
    })
}
