//! Regular discretization of the domain times the cost axis `[0, S]`.

use serde::{Deserialize, Serialize};

use super::problem::{Domain, ExitSet, ProblemSpec};
use crate::error::{Error, Result};

/// Relative tolerance for snapping to grid nodes and checking divisibility.
pub const SNAP: f64 = 1e-9;

/// The portable part of a grid, enough to map points to node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    pub lo: Vec<f64>,
    pub dx: f64,
    pub nodes: Vec<usize>,
    pub ds: f64,
    pub levels: usize,
}

impl GridDescriptor {
    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    /// Node at the lower corner of the cell containing `x`.
    pub fn lower_node(&self, x: &[f64]) -> usize {
        let mut k = 0;
        let mut stride = 1;
        for a in 0..self.nodes.len() {
            let t = (x[a] - self.lo[a]) / self.dx;
            let i = ((t + SNAP).floor().max(0.0) as usize).min(self.nodes[a] - 1);
            k += i * stride;
            stride *= self.nodes[a];
        }
        k
    }

    /// Level at or below the cost `s`; `None` when `s < 0`.
    pub fn lower_level(&self, s: f64) -> Option<usize> {
        if s < 0.0 {
            return None;
        }
        Some((((s / self.ds) + SNAP).floor() as usize).min(self.levels - 1))
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    lo: [f64; 2],
    dx: f64,
    n: [usize; 2],
    ds: f64,
    levels: usize,
    modes: usize,
    exit: Vec<bool>,
    exit_cost: Vec<f64>,
    domain: Domain,
    exit_set: ExitSet,
}

/// Interpolation stencil in space: up to four weighted corner nodes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub nodes: [usize; 4],
    pub weights: [f64; 4],
    pub len: usize,
}

fn divide(extent: f64, step: f64, what: &str) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Grid(format!("{what} spacing must be positive, got {step}")));
    }
    let r = extent / step;
    let n = r.round();
    if (r - n).abs() > SNAP * r.max(1.0) || n < 1.0 {
        return Err(Error::Grid(format!("{what} extent {extent} is not divisible by spacing {step}")));
    }
    Ok(n as usize)
}

/// Builds the grid, flags exit nodes and tabulates exit costs on them.
pub fn build_grid(spec: &ProblemSpec, dx: f64, ds: f64, s_max: f64) -> Result<Grid> {
    spec.validate()?;
    let dim = spec.dim();
    let mut n = [1usize; 2];
    let mut lo = [0.0; 2];
    for a in 0..dim {
        n[a] = divide(spec.domain.hi[a] - spec.domain.lo[a], dx, "space")? + 1;
        lo[a] = spec.domain.lo[a];
    }
    let levels = divide(s_max, ds, "cost")? + 1;
    let nodes = n[0] * n[1];
    let modes = spec.mode_count();
    let mut grid = Grid {
        dim,
        lo,
        dx,
        n,
        ds,
        levels,
        modes,
        exit: vec![false; nodes],
        exit_cost: vec![f64::NAN; modes * nodes],
        domain: spec.domain.clone(),
        exit_set: spec.exit.clone(),
    };
    let tol = SNAP * dx;
    if let ExitSet::Points { points } = &spec.exit {
        for p in points {
            if grid.node_at(p).is_none() {
                return Err(Error::Grid(format!("exit point {p:?} is not a grid node for dx = {dx}")));
            }
        }
    }
    for k in 0..nodes {
        let x = grid.coords(k);
        if spec.exit.contains(&spec.domain, &x[..dim], tol) {
            grid.exit[k] = true;
            for i in 0..modes {
                grid.exit_cost[i * nodes + k] = spec.exit_cost(i, &x[..dim]);
            }
        }
    }
    if !grid.exit.iter().any(|&e| e) {
        return Err(Error::Grid("no grid node lies in the exit set".into()));
    }
    Ok(grid)
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn s_max(&self) -> f64 {
        (self.levels - 1) as f64 * self.ds
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// Node counts per axis (the second is 1 in 1D).
    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.n[0] * iy
    }

    pub fn split(&self, k: usize) -> [usize; 2] {
        [k % self.n[0], k / self.n[0]]
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let [ix, iy] = self.split(k);
        let mut x = [0.0; 2];
        x[0] = self.lo[0] + ix as f64 * self.dx;
        if self.dim == 2 {
            x[1] = self.lo[1] + iy as f64 * self.dx;
        }
        x
    }

    pub fn s(&self, n: usize) -> f64 {
        n as f64 * self.ds
    }

    pub fn is_exit(&self, k: usize) -> bool {
        self.exit[k]
    }

    /// Exit cost of `mode` at exit node `k` (NaN off Q).
    pub fn exit_cost(&self, mode: usize, k: usize) -> f64 {
        self.exit_cost[mode * self.node_count() + k]
    }

    /// Whether an arbitrary boundary point lies in Q.
    pub fn in_exit_set(&self, y: &[f64]) -> bool {
        self.exit_set.contains(&self.domain, &y[..self.dim], SNAP * self.dx)
    }

    /// Node exactly at `x` (within the snap tolerance).
    pub fn node_at(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for a in 0..self.dim {
            let t = (x[a] - self.lo[a]) / self.dx;
            let r = t.round();
            if (t - r).abs() > SNAP || r < 0.0 || r as usize >= self.n[a] {
                return None;
            }
            idx[a] = r as usize;
        }
        Some(self.index(idx[0], idx[1]))
    }

    /// Position of `x` in index coordinates.
    pub(crate) fn to_index(&self, x: &[f64]) -> [f64; 2] {
        let mut t = [0.0; 2];
        for a in 0..self.dim {
            t[a] = (x[a] - self.lo[a]) / self.dx;
        }
        t
    }

    pub(crate) fn from_index(&self, t: [f64; 2]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = self.lo[a] + t[a] * self.dx;
        }
        x
    }

    /// Upper index bound per axis.
    pub(crate) fn max_index(&self) -> [f64; 2] {
        [(self.n[0] - 1) as f64, (self.n[1] - 1) as f64]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.domain.contains(&x[..self.dim], SNAP * self.dx)
    }

    /// Multilinear stencil at index position `t`, which must lie in the grid.
    /// Zero-weight corners are dropped, so node positions give a single corner.
    pub(crate) fn stencil(&self, t: [f64; 2]) -> Stencil {
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..self.dim {
            let top = (self.n[a] - 1) as f64;
            let mut ta = t[a].clamp(0.0, top);
            let r = ta.round();
            if (ta - r).abs() <= SNAP {
                ta = r;
            }
            let i = if self.n[a] >= 2 { (ta.floor() as usize).min(self.n[a] - 2) } else { 0 };
            base[a] = i;
            frac[a] = ta - i as f64;
        }
        let mut st = Stencil { nodes: [0; 4], weights: [0.0; 4], len: 0 };
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut idx = [0usize; 2];
            for a in 0..self.dim {
                let up = (corner >> a) & 1;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                idx[a] = base[a] + up;
            }
            if w == 0.0 {
                continue;
            }
            st.nodes[st.len] = self.index(idx[0], idx[1]);
            st.weights[st.len] = w;
            st.len += 1;
        }
        st
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            lo: self.lo[..self.dim].to_vec(),
            dx: self.dx,
            nodes: self.n[..self.dim].to_vec(),
            ds: self.ds,
            levels: self.levels,
        }
    }
}

/// Exit boundary condition: 1 once the budget covers the exit cost.
#[inline]
pub(crate) fn boundary_value(q: f64, s: f64, ds: f64) -> f64 {
    if s >= q - SNAP * ds {
        1.0
    } else {
        0.0
    }
}
