//! Minimal attainable exit cost `s0(x)` and the probability `w0_i(x)` of
//! attaining it, plus the domain restriction they induce.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::scheme::{Prepared, Scheme, Sense};
use crate::error::{Error, Result};
use crate::model::{Grid, ProblemSpec, RateBounds, RateMatrix, Rates, SNAP};

/// Relative tolerance for membership in the argmin set.
pub const ARGMIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MinCostField {
    modes: usize,
    nodes: usize,
    /// `s0` per node; `+inf` marks nodes from which Q cannot be reached.
    s0: Vec<f64>,
    /// `w0` laid out `[mode][node]`.
    w0: Vec<f64>,
    /// Sweeps that changed at least one label (1D only, else 0).
    pub sweeps: usize,
}

impl MinCostField {
    pub fn s0(&self, k: usize) -> Option<f64> {
        let v = self.s0[k];
        v.is_finite().then_some(v)
    }

    pub fn s0_values(&self) -> &[f64] {
        &self.s0
    }

    pub fn w0(&self, mode: usize, k: usize) -> f64 {
        self.w0[mode * self.nodes + k]
    }

    pub fn w0_values(&self) -> &[f64] {
        &self.w0
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

/// Rate model used when propagating `w0`.
#[derive(Clone, Copy)]
pub(crate) enum W0Rates<'a> {
    Fixed(&'a RateMatrix),
    Bounded(&'a RateBounds, Sense),
}

impl W0Rates<'_> {
    fn step(&self, i: usize, dt: f64, vals: &[f64]) -> f64 {
        let mut acc = vals[i];
        for (j, &vj) in vals.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = vj - vals[i];
            let rate = match self {
                W0Rates::Fixed(r) => r.rate(i, j),
                W0Rates::Bounded(b, sense) => crate::bounds::optimal_rate(d, b.lower(i, j), b.upper(i, j), *sense),
            };
            acc += dt * rate * d;
        }
        acc.clamp(0.0, 1.0)
    }
}

/// Computes `s0` and `w0` with fixed rates. Controlled problems minimize over
/// (mode, action) pairs.
pub fn solve_min_cost(spec: &ProblemSpec, grid: &Grid) -> Result<MinCostField> {
    match &spec.rates {
        Rates::Fixed(r) => Ok(min_cost_field(spec, grid, W0Rates::Fixed(r))),
        Rates::Bounded(_) => Err(Error::Precondition(
            "w0 needs fixed rates; use solve_min_cost_bounds for interval rates".into(),
        )),
    }
}

pub(crate) fn min_cost_field(spec: &ProblemSpec, grid: &Grid, rates: W0Rates) -> MinCostField {
    let scheme = Scheme::new(spec, grid, 0.0);
    let (s0, sweeps) = if grid.dim() == 1 { sweep_s0(&scheme) } else { label_correct_s0(&scheme) };
    let w0 = propagate_w0(&scheme, &s0, rates);
    MinCostField { modes: spec.mode_count(), nodes: grid.node_count(), s0, w0, sweeps }
}

/// Foot of the move that reaches the ring of neighbours of node `k`.
fn ring_move(scheme: &Scheme, mode: usize, k: usize, action: usize) -> Option<Prepared> {
    let v = scheme.velocity(mode, k, action);
    let speed = v[0].abs().max(v[1].abs());
    if speed == 0.0 {
        return None;
    }
    match scheme.prepare(scheme.foot(mode, k, action, scheme.grid.dx() / speed)) {
        Prepared::Escape => None,
        p => Some(p),
    }
}

fn candidate(scheme: &Scheme, mode: usize, k: usize, foot: &Prepared, s0: &[f64]) -> f64 {
    let run = scheme.cost(mode, k) * foot.dt();
    match foot {
        Prepared::Inside { st, .. } => {
            let mut v = 0.0;
            for c in 0..st.len {
                v += st.weights[c] * s0[st.nodes[c]];
            }
            run + v
        }
        Prepared::Exit { q, .. } => run + q.iter().copied().fold(f64::INFINITY, f64::min),
        Prepared::Escape => f64::INFINITY,
    }
}

fn best_candidate(scheme: &Scheme, k: usize, s0: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..scheme.modes() {
        for a in 0..scheme.actions.len() {
            if let Some(foot) = ring_move(scheme, i, k, a) {
                best = best.min(candidate(scheme, i, k, &foot, s0));
            }
        }
    }
    best
}

fn exit_labels(scheme: &Scheme) -> Vec<f64> {
    let grid = scheme.grid;
    (0..grid.node_count())
        .map(|k| {
            if grid.is_exit(k) {
                (0..scheme.modes()).map(|i| grid.exit_cost(i, k)).fold(f64::INFINITY, f64::min)
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

#[inline]
fn improves(new: f64, old: f64) -> bool {
    new < old - 1e-14 * (1.0 + new.abs())
}

fn sweep_s0(scheme: &Scheme) -> (Vec<f64>, usize) {
    let grid = scheme.grid;
    let n = grid.node_count();
    let mut s0 = exit_labels(scheme);
    let mut sweeps = 0;
    for pass in 0..=2 * n {
        let mut changed = false;
        for idx in 0..n {
            let k = if pass % 2 == 0 { idx } else { n - 1 - idx };
            if grid.is_exit(k) {
                continue;
            }
            let c = best_candidate(scheme, k, &s0);
            if improves(c, s0[k]) {
                s0[k] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        sweeps += 1;
    }
    (s0, sweeps)
}

#[derive(PartialEq)]
struct HeapKey(f64, usize);

impl Eq for HeapKey {}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn label_correct_s0(scheme: &Scheme) -> (Vec<f64>, usize) {
    let grid = scheme.grid;
    let [nx, ny] = grid.shape();
    let mut s0 = exit_labels(scheme);
    let mut heap: BinaryHeap<HeapKey> =
        (0..grid.node_count()).filter(|&k| grid.is_exit(k)).map(|k| HeapKey(s0[k], k)).collect();
    while let Some(HeapKey(v, k)) = heap.pop() {
        if v > s0[k] {
            continue;
        }
        let [ix, iy] = grid.split(k);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if (dx == 0 && dy == 0) || jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                    continue;
                }
                let nb = grid.index(jx as usize, jy as usize);
                if grid.is_exit(nb) {
                    continue;
                }
                let c = best_candidate(scheme, nb, &s0);
                if improves(c, s0[nb]) {
                    s0[nb] = c;
                    heap.push(HeapKey(c, nb));
                }
            }
        }
    }
    (s0, 0)
}

fn in_argmin(v: f64, best: f64) -> bool {
    v <= best + ARGMIN_TOL * best.abs().max(1e-300)
}

fn propagate_w0(scheme: &Scheme, s0: &[f64], rates: W0Rates) -> Vec<f64> {
    let grid = scheme.grid;
    let m = scheme.modes();
    let nodes = grid.node_count();
    let mut w0 = vec![0.0; m * nodes];
    for k in (0..nodes).filter(|&k| grid.is_exit(k)) {
        let qs: Vec<f64> = (0..m).map(|i| grid.exit_cost(i, k)).collect();
        let best = qs.iter().copied().fold(f64::INFINITY, f64::min);
        for i in 0..m {
            if in_argmin(qs[i], best) {
                w0[i * nodes + k] = 1.0;
            }
        }
    }
    let mut order: Vec<usize> = (0..nodes).filter(|&k| !grid.is_exit(k) && s0[k].is_finite()).collect();
    order.sort_by(|&a, &b| s0[a].total_cmp(&s0[b]).then(a.cmp(&b)));
    let mut vals = vec![0.0; m];
    let mut moves = Vec::new();
    for k in order {
        moves.clear();
        let mut best = f64::INFINITY;
        for i in 0..m {
            for a in 0..scheme.actions.len() {
                if let Some(foot) = ring_move(scheme, i, k, a) {
                    let c = candidate(scheme, i, k, &foot, s0);
                    best = best.min(c);
                    moves.push((i, c, foot));
                }
            }
        }
        for (i, c, foot) in &moves {
            if !in_argmin(*c, best) {
                continue;
            }
            match foot {
                Prepared::Inside { st, .. } => {
                    for (j, v) in vals.iter_mut().enumerate() {
                        *v = (0..st.len).map(|c| st.weights[c] * w0[j * nodes + st.nodes[c]]).sum();
                    }
                }
                Prepared::Exit { q, .. } => {
                    let qmin = q.iter().copied().fold(f64::INFINITY, f64::min);
                    for (v, &qj) in vals.iter_mut().zip(q) {
                        *v = if in_argmin(qj, qmin) { 1.0 } else { 0.0 };
                    }
                }
                Prepared::Escape => continue,
            }
            let w = rates.step(*i, foot.dt(), &vals);
            let slot = &mut w0[i * nodes + k];
            *slot = slot.max(w);
        }
    }
    w0
}

/// Per-node first active level and the values seeded there.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    /// `n0(k)`; `levels` when `s0` is infinite or beyond `S`.
    pub first_level: Vec<usize>,
    /// Seed values `[mode][node]`.
    pub seed: Vec<f64>,
}

/// First level at or above `s0`, rounding up unless `s0` sits on a level.
pub fn first_level(s0: f64, ds: f64, levels: usize) -> usize {
    if !s0.is_finite() {
        return levels;
    }
    let r = s0 / ds;
    let n = r.round();
    let n0 = if (r - n).abs() <= SNAP * r.abs().max(1.0) { n } else { r.ceil() };
    (n0.max(0.0) as usize).min(levels)
}

pub fn restrict_domain(mc: &MinCostField, grid: &Grid) -> Restriction {
    let first_level = mc.s0.iter().map(|&s| first_level(s, grid.ds(), grid.levels())).collect();
    Restriction { first_level, seed: mc.w0.clone() }
}
