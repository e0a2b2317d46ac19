//! Fully discrete PDMPs: deterministic routes on a graph with random route
//! switching after every step.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ARGMIN_TOL: f64 = 1e-12;
const ROW_TOL: f64 = 1e-12;

/// Routes `F_i: X -> X` with step costs, exit costs and switch probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutedGraph {
    pub nodes: usize,
    /// Exit flags, one per node.
    pub exit: Vec<bool>,
    /// `routes[i][x]` is `F_i(x)`.
    pub routes: Vec<Vec<usize>>,
    /// `step_cost[i][x]` is `K_i(x)`.
    pub step_cost: Vec<Vec<f64>>,
    /// `exit_cost[i][x]` is `q_i(x)`, read only on exit nodes.
    pub exit_cost: Vec<Vec<f64>>,
    /// `switch[i][j]` is the probability of continuing on route `j` after a step on route `i`.
    pub switch: Vec<Vec<f64>>,
}

/// A cost that may be infinite because Q is never reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Cost(f64),
    Unreachable,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Cost(c) => c,
            Label::Unreachable => f64::INFINITY,
        }
    }

    fn from_value(v: f64) -> Self {
        if v.is_finite() {
            Label::Cost(v)
        } else {
            Label::Unreachable
        }
    }
}

impl RoutedGraph {
    /// Nodes `0..n` on a line with exits at both ends; route 0 steps right,
    /// route 1 steps left, unit step costs, zero exit costs.
    pub fn two_way_line(n: usize, switch: [[f64; 2]; 2]) -> Self {
        let right = (0..n).map(|x| if x + 1 < n { x + 1 } else { x }).collect();
        let left = (0..n).map(|x| x.saturating_sub(1)).collect();
        RoutedGraph {
            nodes: n,
            exit: (0..n).map(|x| x == 0 || x + 1 == n).collect(),
            routes: vec![right, left],
            step_cost: vec![vec![1.0; n]; 2],
            exit_cost: vec![vec![0.0; n]; 2],
            switch: switch.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.nodes, self.routes.len());
        if n == 0 || m == 0 {
            return Err(Error::Model("graph needs at least one node and one route".into()));
        }
        let shape_ok = |v: &Vec<Vec<f64>>| v.len() == m && v.iter().all(|r| r.len() == n);
        if self.exit.len() != n
            || self.routes.iter().any(|r| r.len() != n)
            || !shape_ok(&self.step_cost)
            || !shape_ok(&self.exit_cost)
        {
            return Err(Error::Model("graph arrays do not match the node and route counts".into()));
        }
        for (i, r) in self.routes.iter().enumerate() {
            if let Some(x) = r.iter().position(|&y| y >= n) {
                return Err(Error::Model(format!("route {i} maps node {x} outside the graph")));
            }
        }
        for i in 0..m {
            for x in 0..n {
                if self.exit[x] {
                    let q = self.exit_cost[i][x];
                    if !(q >= 0.0 && q.is_finite()) {
                        return Err(Error::Model(format!("exit cost q[{i}][{x}] = {q} must be finite and >= 0")));
                    }
                } else {
                    let k = self.step_cost[i][x];
                    if !(k > 0.0 && k.is_finite()) {
                        return Err(Error::Model(format!("step cost K[{i}][{x}] = {k} must be positive")));
                    }
                }
            }
        }
        if self.switch.len() != m {
            return Err(Error::Model("switch matrix must be square over routes".into()));
        }
        for (i, row) in self.switch.iter().enumerate() {
            if row.len() != m || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Model(format!("switch row {i} is not a probability vector")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::Model(format!("switch row {i} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Cost of following `route` forever without switching.
pub fn solve_deterministic_cost(g: &RoutedGraph, route: usize) -> Result<Vec<Label>> {
    g.validate()?;
    if route >= g.route_count() {
        return Err(Error::Precondition(format!("route {route} does not exist")));
    }
    let f = &g.routes[route];
    let mut cost: Vec<Option<f64>> = vec![None; g.nodes];
    let mut on_path = vec![false; g.nodes];
    for start in 0..g.nodes {
        let mut path = Vec::new();
        let mut x = start;
        let tail = loop {
            if let Some(c) = cost[x] {
                break c;
            }
            if g.exit[x] {
                cost[x] = Some(g.exit_cost[route][x]);
                break g.exit_cost[route][x];
            }
            if on_path[x] {
                break f64::INFINITY;
            }
            on_path[x] = true;
            path.push(x);
            x = f[x];
        };
        let mut acc = tail;
        for &y in path.iter().rev() {
            acc += g.step_cost[route][y];
            cost[y] = Some(acc);
            on_path[y] = false;
        }
    }
    Ok(cost.into_iter().map(|c| Label::from_value(c.unwrap_or(f64::INFINITY))).collect())
}

/// Expected exit cost `u_i(x)`, indexed `[route][node]`, by a dense solve.
pub fn solve_expected_cost(g: &RoutedGraph) -> Result<Vec<Vec<f64>>> {
    g.validate()?;
    let (n, m) = (g.nodes, g.route_count());
    let dim = n * m;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    for i in 0..m {
        for x in 0..n {
            let r = i * n + x;
            a[(r, r)] = 1.0;
            if g.exit[x] {
                b[r] = g.exit_cost[i][x];
                continue;
            }
            b[r] = g.step_cost[i][x];
            let y = g.routes[i][x];
            for j in 0..m {
                a[(r, j * n + y)] -= g.switch[i][j];
            }
        }
    }
    let u = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("expected-cost system is singular; some state never exits".into()))?;
    let residual = (&a * &u - &b).amax();
    if !u.iter().all(|v| v.is_finite()) || residual > 1e-10 * b.amax().max(1.0) || u.iter().any(|&v| v < -1e-9) {
        return Err(Error::Singular(format!("expected-cost system is ill-posed (residual {residual:e})")));
    }
    Ok((0..m).map(|i| (0..n).map(|x| u[i * n + x]).collect()).collect())
}

/// CDF values `w_i(x, s_n)` on levels `s_n = n ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCdf {
    pub ds: f64,
    pub levels: usize,
    nodes: usize,
    routes: usize,
    values: Vec<f64>,
}

impl DiscreteCdf {
    fn zeros(ds: f64, levels: usize, nodes: usize, routes: usize) -> Self {
        DiscreteCdf { ds, levels, nodes, routes, values: vec![0.0; levels * nodes * routes] }
    }

    pub fn get(&self, n: usize, route: usize, x: usize) -> f64 {
        self.values[(n * self.routes + route) * self.nodes + x]
    }

    fn set(&mut self, n: usize, route: usize, x: usize, v: f64) {
        self.values[(n * self.routes + route) * self.nodes + x] = v;
    }

    pub fn s(&self, n: usize) -> f64 {
        n as f64 * self.ds
    }

    /// `sum_n (1 - w(s_n)) ds`, the mean of the cost truncated at the top level.
    pub fn tail_mean(&self, route: usize, x: usize) -> f64 {
        (0..self.levels).map(|n| 1.0 - self.get(n, route, x)).sum::<f64>() * self.ds
    }

    /// Largest absolute difference to another CDF on the same levels.
    pub fn max_diff(&self, other: &DiscreteCdf) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn level_count(ds: f64, s_max: f64) -> Result<usize> {
    if !(ds > 0.0 && s_max >= 0.0) {
        return Err(Error::Precondition(format!("need ds > 0 and s_max >= 0, got ds = {ds}, s_max = {s_max}")));
    }
    let r = s_max / ds;
    if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Grid(format!("s_max = {s_max} is not a multiple of ds = {ds}")));
    }
    Ok(r.round() as usize + 1)
}

#[inline]
fn exit_indicator(q: f64, s: f64, ds: f64) -> f64 {
    if s >= q - 1e-9 * ds {
        1.0
    } else {
        0.0
    }
}

/// CDF by one upward sweep over the cost levels.
pub fn solve_cdf(g: &RoutedGraph, ds: f64, s_max: f64) -> Result<DiscreteCdf> {
    g.validate()?;
    let levels = level_count(ds, s_max)?;
    let (n, m) = (g.nodes, g.route_count());
    for i in 0..m {
        for x in 0..n {
            if !g.exit[x] && g.step_cost[i][x] < ds * (1.0 - 1e-9) {
                return Err(Error::Numerics(format!(
                    "step cost K[{i}][{x}] = {} is below ds = {ds}; the sweep would not be causal",
                    g.step_cost[i][x]
                )));
            }
        }
    }
    let mut w = DiscreteCdf::zeros(ds, levels, n, m);
    for lvl in 0..levels {
        let s = lvl as f64 * ds;
        for i in 0..m {
            for x in 0..n {
                let v = if g.exit[x] {
                    exit_indicator(g.exit_cost[i][x], s, ds)
                } else if lvl == 0 {
                    0.0
                } else {
                    let y = g.routes[i][x];
                    let sp = s - g.step_cost[i][x];
                    let mut acc = 0.0;
                    for j in 0..m {
                        let p = g.switch[i][j];
                        if p == 0.0 {
                            continue;
                        }
                        let wj = if g.exit[y] {
                            exit_indicator(g.exit_cost[j][y], sp, ds)
                        } else {
                            let mut t = sp / ds;
                            if (t - t.round()).abs() <= 1e-9 {
                                t = t.round();
                            }
                            if t <= 0.0 {
                                0.0
                            } else {
                                let lo = t.floor() as usize;
                                let f = t - lo as f64;
                                if f == 0.0 {
                                    w.get(lo, j, y)
                                } else {
                                    (1.0 - f) * w.get(lo, j, y) + f * w.get(lo + 1, j, y)
                                }
                            }
                        };
                        acc += p * wj;
                    }
                    acc
                };
                w.set(lvl, i, x, v);
            }
        }
    }
    Ok(w)
}

/// Minimal attainable cost with free switching, and the probability of attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMinCost {
    /// `s0[i][x]`.
    pub s0: Vec<Vec<Label>>,
    /// `w0[i][x]`.
    pub w0: Vec<Vec<f64>>,
}

#[derive(PartialEq)]
struct HeapKey {
    cost: f64,
    node: usize,
    route: usize,
}

impl Eq for HeapKey {}

impl Ord for HeapKey {
    // Reversed so that the max-heap pops the lexicographically smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.route.cmp(&self.route))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on the extended graph of (node, route) states, run backwards from Q.
pub fn solve_min_cost(g: &RoutedGraph) -> Result<DiscreteMinCost> {
    g.validate()?;
    let (n, m) = (g.nodes, g.route_count());
    let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n * m];
    for i in 0..m {
        for x in 0..n {
            if g.exit[x] {
                continue;
            }
            let y = g.routes[i][x];
            for j in 0..m {
                if g.switch[i][j] > 0.0 {
                    preds[j * n + y].push((x, i));
                }
            }
        }
    }
    let mut label = vec![f64::INFINITY; n * m];
    let mut done = vec![false; n * m];
    let mut w0 = vec![0.0; n * m];
    let mut heap = BinaryHeap::new();
    for x in (0..n).filter(|&x| g.exit[x]) {
        for i in 0..m {
            label[i * n + x] = g.exit_cost[i][x];
            heap.push(HeapKey { cost: g.exit_cost[i][x], node: x, route: i });
        }
    }
    while let Some(HeapKey { cost, node: x, route: i }) = heap.pop() {
        let id = i * n + x;
        if done[id] || cost > label[id] {
            continue;
        }
        done[id] = true;
        w0[id] = if g.exit[x] {
            1.0
        } else {
            let y = g.routes[i][x];
            let target = cost - g.step_cost[i][x];
            (0..m)
                .filter(|&j| g.switch[i][j] > 0.0 && (label[j * n + y] - target).abs() <= ARGMIN_TOL * target.abs().max(1.0))
                .map(|j| g.switch[i][j] * w0[j * n + y])
                .sum()
        };
        for &(px, pi) in &preds[id] {
            let pid = pi * n + px;
            let cand = g.step_cost[pi][px] + cost;
            if !done[pid] && cand < label[pid] {
                label[pid] = cand;
                heap.push(HeapKey { cost: cand, node: px, route: pi });
            }
        }
    }
    Ok(DiscreteMinCost {
        s0: (0..m).map(|i| (0..n).map(|x| Label::from_value(label[i * n + x])).collect()).collect(),
        w0: (0..m).map(|i| (0..n).map(|x| w0[i * n + x]).collect()).collect(),
    })
}

/// Exact CDF by forward propagation of probability mass, plus the mass still
/// in flight after `depth_max` steps (an upper bound on the error).
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceCdf {
    pub cdf: DiscreteCdf,
    pub truncation: f64,
}

impl BruteForceCdf {
    pub fn truncated(&self) -> bool {
        self.truncation > 1e-12
    }
}

/// Oracle: enumerates paths on the extended graph of (node, route, cost) states.
pub fn brute_force_cdf(g: &RoutedGraph, ds: f64, s_max: f64, depth_max: usize) -> Result<BruteForceCdf> {
    g.validate()?;
    let levels = level_count(ds, s_max)?;
    let (n, m) = (g.nodes, g.route_count());
    let tol = 1e-9 * ds;
    let mut out = DiscreteCdf::zeros(ds, levels, n, m);
    let mut worst = 0.0f64;
    for i0 in 0..m {
        for x0 in 0..n {
            let mut exits: Vec<(f64, f64)> = Vec::new();
            if g.exit[x0] {
                exits.push((g.exit_cost[i0][x0], 1.0));
            } else {
                let mut states: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
                states.insert((x0, i0, 0f64.to_bits()), 1.0);
                for _ in 0..depth_max {
                    let mut next: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
                    for (&(x, i, cb), &mass) in &states {
                        let c = f64::from_bits(cb) + g.step_cost[i][x];
                        if c > s_max + tol {
                            continue;
                        }
                        let y = g.routes[i][x];
                        for j in 0..m {
                            let p = g.switch[i][j];
                            if p == 0.0 {
                                continue;
                            }
                            if g.exit[y] {
                                exits.push((c + g.exit_cost[j][y], mass * p));
                            } else {
                                *next.entry((y, j, c.to_bits())).or_insert(0.0) += mass * p;
                            }
                        }
                    }
                    states = next;
                    if states.is_empty() {
                        break;
                    }
                }
                worst = worst.max(states.values().sum());
            }
            for lvl in 0..levels {
                let s = lvl as f64 * ds;
                let v: f64 = exits.iter().filter(|(c, _)| *c <= s + tol).map(|(_, p)| p).sum();
                out.set(lvl, i0, x0, v);
            }
        }
    }
    Ok(BruteForceCdf { cdf: out, truncation: worst })
}
