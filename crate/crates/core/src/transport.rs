//! Exact optimal transport between two uniform discrete measures.
//!
//! Transportation simplex on the bipartite rows/columns tree. Masses are
//! scaled to integers (`m` per row, `n` per column) and perturbed to
//! `m·L + 1` per row and `n·L (+ n on the last column)` with `L = n + 1`,
//! which makes every basic solution non-degenerate, so pivoting cannot
//! cycle. The optimal basis of the perturbed problem is optimal for the
//! original one; flows are recomputed on that basis with the true masses.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimal `Σ π_ij c_ij` over couplings with row sums `1/n` and column sums
/// `1/m`. `cost` is row-major `n×m`.
pub fn uniform_transport_cost<T: Real>(cost: &[T], n: usize, m: usize) -> Result<T> {
    let plan = TransportPlan::solve(cost, n, m)?;
    Ok(plan.cost(cost))
}

/// Optimal basis and integer flows (in units of `1/(n·m)`).
#[derive(Debug, Clone)]
pub struct TransportPlan {
    n: usize,
    m: usize,
    /// Basic cells `(i, j, flow)`.
    cells: Vec<(usize, usize, i64)>,
}

impl TransportPlan {
    pub fn solve<T: Real>(cost: &[T], n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("transport between empty measures".into()));
        }
        if cost.len() != n * m {
            return Err(Error::DimensionMismatch { expected: n * m, got: cost.len() });
        }
        let mut tree = Tree::northwest(n, m);
        tree.optimise(cost)?;
        let cells = tree.true_flows();
        Ok(Self { n, m, cells })
    }

    /// Transport cost of the plan.
    pub fn cost<T: Real>(&self, cost: &[T]) -> T {
        let total: T = self
            .cells
            .iter()
            .filter(|c| c.2 != 0)
            .map(|&(i, j, f)| T::lit(f as f64) * cost[i * self.m + j])
            .sum();
        total / T::from_count(self.n * self.m)
    }

    /// Coupling mass on every basic cell, as fractions of the total.
    pub fn couplings(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let total = (self.n * self.m) as f64;
        self.cells.iter().map(move |&(i, j, f)| (i, j, f as f64 / total))
    }
}

struct Tree {
    n: usize,
    m: usize,
    /// Perturbed integer flow for every cell; meaningful on basic cells.
    flow: Vec<i64>,
    basic: Vec<bool>,
    /// Node adjacency: rows are `0..n`, columns `n..n+m`.
    adj: Vec<Vec<usize>>,
}

impl Tree {
    /// Initial basis from the northwest-corner rule.
    fn northwest(n: usize, m: usize) -> Self {
        let l = n as i64 + 1;
        let mut supply: Vec<i64> = vec![m as i64 * l + 1; n];
        let mut demand: Vec<i64> = vec![n as i64 * l; m];
        demand[m - 1] += n as i64;
        let mut tree = Tree {
            n,
            m,
            flow: vec![0; n * m],
            basic: vec![false; n * m],
            adj: vec![Vec::new(); n + m],
        };
        let (mut i, mut j) = (0, 0);
        loop {
            let f = supply[i].min(demand[j]);
            tree.add(i, j, f);
            supply[i] -= f;
            demand[j] -= f;
            if i + 1 == n && j + 1 == m {
                break;
            }
            if supply[i] == 0 {
                i += 1;
            } else {
                j += 1;
            }
        }
        tree
    }

    fn add(&mut self, i: usize, j: usize, f: i64) {
        let k = i * self.m + j;
        self.basic[k] = true;
        self.flow[k] = f;
        self.adj[i].push(self.n + j);
        self.adj[self.n + j].push(i);
    }

    fn remove(&mut self, i: usize, j: usize) {
        let k = i * self.m + j;
        self.basic[k] = false;
        self.flow[k] = 0;
        let cj = self.n + j;
        let pos = self.adj[i].iter().position(|&v| v == cj).expect("edge present");
        self.adj[i].swap_remove(pos);
        let pos = self.adj[cj].iter().position(|&v| v == i).expect("edge present");
        self.adj[cj].swap_remove(pos);
    }

    /// Roots the tree at node 0 and sets tight potentials (`pot[0] = 0`,
    /// rows `0..n`, columns `n..n+m`).
    fn root<T: Real>(&self, cost: &[T], parent: &mut [usize], depth: &mut [usize], pot: &mut [T]) {
        parent[0] = usize::MAX;
        depth[0] = 0;
        pot[0] = T::zero();
        self.hang(cost, 0, parent, depth, pot);
    }

    /// Re-derives parent, depth and potentials below `top`, whose own
    /// entries are already set.
    fn hang<T: Real>(&self, cost: &[T], top: usize, parent: &mut [usize], depth: &mut [usize], pot: &mut [T]) {
        let mut stack = vec![top];
        while let Some(node) = stack.pop() {
            for &next in &self.adj[node] {
                if next == parent[node] {
                    continue;
                }
                parent[next] = node;
                depth[next] = depth[node] + 1;
                let (i, j) = cell_of(node, next, self.n);
                pot[next] = cost[i * self.m + j] - pot[node];
                stack.push(next);
            }
        }
    }

    fn optimise<T: Real>(&mut self, cost: &[T]) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let cells = n * m;
        let scale = cost.iter().fold(T::one(), |a, &c| a.max(c.abs()));
        if !scale.is_finite() {
            return Err(Error::InvalidArgument("non-finite transport cost".into()));
        }
        let tol = T::epsilon() * T::lit(256.0) * scale;
        let block = ((cells as f64).sqrt().ceil() as usize).max(16).min(cells);
        let mut parent = vec![usize::MAX; n + m];
        let mut depth = vec![0usize; n + m];
        let mut pot = vec![T::zero(); n + m];
        self.root(cost, &mut parent, &mut depth, &mut pot);
        let mut cursor = 0usize;
        let max_pivots = 64 * cells + 1000;
        let (mut up_a, mut up_b) = (Vec::new(), Vec::new());
        for _ in 0..max_pivots {
            // Block search pricing: best candidate within the first block
            // that contains a negative reduced cost.
            let mut best: Option<(usize, T)> = None;
            let mut scanned = 0;
            let mut k = cursor;
            for _ in 0..cells {
                if !self.basic[k] {
                    let (i, j) = (k / m, k % m);
                    let r = cost[k] - pot[i] - pot[n + j];
                    if r < -tol && best.map_or(true, |(_, b)| r < b) {
                        best = Some((k, r));
                    }
                }
                k += 1;
                if k == cells {
                    k = 0;
                }
                scanned += 1;
                if scanned == block {
                    if best.is_some() {
                        break;
                    }
                    scanned = 0;
                }
            }
            cursor = k;
            let Some((enter, _)) = best else {
                return Ok(());
            };
            let (ei, ej) = (enter / m, enter % m);

            // Cycle: entering cell (+), then the tree path column → row with
            // alternating signs starting at (−). Walk both ends up to the
            // common ancestor.
            let (a, b) = (ei, n + ej);
            up_a.clear();
            up_b.clear();
            let (mut x, mut y) = (a, b);
            up_a.push(x);
            up_b.push(y);
            while x != y {
                if depth[x] >= depth[y] {
                    x = parent[x];
                    up_a.push(x);
                } else {
                    y = parent[y];
                    up_b.push(y);
                }
            }
            up_a.pop();
            let path: Vec<usize> = up_b.iter().copied().chain(up_a.iter().rev().copied()).collect();
            let mut theta = i64::MAX;
            let mut leave = 0;
            for (step, w) in path.windows(2).enumerate() {
                if step % 2 == 0 {
                    let (i, j) = cell_of(w[0], w[1], n);
                    let f = self.flow[i * m + j];
                    if f < theta {
                        theta = f;
                        leave = step;
                    }
                }
            }
            for (step, w) in path.windows(2).enumerate() {
                let (i, j) = cell_of(w[0], w[1], n);
                if step % 2 == 0 {
                    self.flow[i * m + j] -= theta;
                } else {
                    self.flow[i * m + j] += theta;
                }
            }
            let (p, q) = (path[leave], path[leave + 1]);
            // The leaving edge cuts off the subtree below it, which holds `b`
            // when the edge lies on the column side of the cycle.
            let (top, other) = if leave + 1 < up_b.len() { (b, a) } else { (a, b) };
            let (li, lj) = cell_of(p, q, n);
            self.remove(li, lj);
            self.add(ei, ej, theta);
            parent[top] = other;
            depth[top] = depth[other] + 1;
            pot[top] = cost[enter] - pot[other];
            self.hang(cost, top, &mut parent, &mut depth, &mut pot);
        }
        Err(Error::InvalidArgument(format!(
            "transport simplex did not converge within {max_pivots} pivots"
        )))
    }

    /// Flows of the current basis under the unperturbed masses.
    fn true_flows(&self) -> Vec<(usize, usize, i64)> {
        let (n, m) = (self.n, self.m);
        let mut residual: Vec<i64> = (0..n + m).map(|v| if v < n { m as i64 } else { n as i64 }).collect();
        let mut adj = self.adj.clone();
        let mut out = Vec::with_capacity(n + m - 1);
        let mut leaves: VecDeque<usize> = (0..n + m).filter(|&v| adj[v].len() == 1).collect();
        while let Some(leaf) = leaves.pop_front() {
            if adj[leaf].len() != 1 {
                continue;
            }
            let other = adj[leaf][0];
            let f = residual[leaf];
            residual[other] -= f;
            residual[leaf] = 0;
            let (i, j) = cell_of(leaf, other, n);
            out.push((i, j, f));
            adj[leaf].clear();
            let pos = adj[other].iter().position(|&x| x == leaf).expect("edge present");
            adj[other].swap_remove(pos);
            if adj[other].len() == 1 {
                leaves.push_back(other);
            }
        }
        debug_assert!(out.iter().all(|c| c.2 >= 0));
        out.sort_unstable();
        out
    }
}

fn cell_of(a: usize, b: usize, n: usize) -> (usize, usize) {
    if a < n {
        (a, b - n)
    } else {
        (b, a - n)
    }
}
