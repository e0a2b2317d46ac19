//! Grid functions over (cost level, mode, node) and their interpolation.

use serde::{Deserialize, Serialize};

use super::grid::{boundary_value, Grid, Stencil, SNAP};
use crate::error::{Error, Result};

/// Which quantity a [`CdfField`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Cdf,
    Upper,
    Lower,
    Threshold,
    PolicyCdf,
}

/// Values `W[n][i][k]` approximating `w_i(x_k, s_n)`. Exit nodes hold the
/// boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfField {
    levels: usize,
    modes: usize,
    nodes: usize,
    ds: f64,
    values: Vec<f64>,
    pub tau: f64,
    pub kind: FieldKind,
}

impl CdfField {
    pub fn zeros(grid: &Grid, tau: f64, kind: FieldKind) -> Self {
        let (levels, modes, nodes) = (grid.levels(), grid.modes(), grid.node_count());
        CdfField { levels, modes, nodes, ds: grid.ds(), values: vec![0.0; levels * modes * nodes], tau, kind }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn get(&self, n: usize, mode: usize, k: usize) -> f64 {
        self.values[(n * self.modes + mode) * self.nodes + k]
    }

    #[inline]
    pub fn set(&mut self, n: usize, mode: usize, k: usize, v: f64) {
        self.values[(n * self.modes + mode) * self.nodes + k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// All modes at level `n`, mode-major.
    pub fn level(&self, n: usize) -> &[f64] {
        let w = self.modes * self.nodes;
        &self.values[n * w..(n + 1) * w]
    }

    /// Levels `< n` (read-only) and level `n` (mutable).
    pub(crate) fn split_at_level(&mut self, n: usize) -> (&[f64], &mut [f64]) {
        let w = self.modes * self.nodes;
        let (below, rest) = self.values.split_at_mut(n * w);
        (below, &mut rest[..w])
    }

    /// Value at `(k, mode)` for a fractional level `ts = s / ds`, reading
    /// only levels strictly below `limit`.
    #[inline]
    pub(crate) fn node_value(grid: &Grid, data: &[f64], modes: usize, limit: usize, mode: usize, k: usize, ts: f64) -> f64 {
        if grid.is_exit(k) {
            return boundary_value(grid.exit_cost(mode, k), ts * grid.ds(), grid.ds());
        }
        level_interp(data, modes, grid.node_count(), limit, mode, k, ts)
    }

    #[inline]
    pub(crate) fn stencil_value(grid: &Grid, data: &[f64], modes: usize, limit: usize, st: &Stencil, mode: usize, ts: f64) -> f64 {
        let mut v = 0.0;
        for c in 0..st.len {
            v += st.weights[c] * Self::node_value(grid, data, modes, limit, mode, st.nodes[c], ts);
        }
        v
    }

    /// Multilinear interpolation in `(x, s)`. Below `s = 0` non-exit values
    /// are zero; above `S` the top level is used.
    pub fn interpolate(&self, grid: &Grid, mode: usize, x: &[f64], s: f64) -> Result<f64> {
        if !grid.contains(x) {
            return Err(Error::Precondition(format!("point {x:?} lies outside the domain")));
        }
        let st = grid.stencil(grid.to_index(x));
        Ok(Self::stencil_value(grid, &self.values, self.modes, self.levels, &st, mode, s / self.ds))
    }

    /// `w_mode(x_k, s_n)` for all levels.
    pub fn curve(&self, mode: usize, k: usize) -> Vec<f64> {
        (0..self.levels).map(|n| self.get(n, mode, k)).collect()
    }
}

#[inline]
fn level_interp(data: &[f64], modes: usize, nodes: usize, limit: usize, mode: usize, k: usize, ts: f64) -> f64 {
    let mut t = ts;
    let r = t.round();
    if (t - r).abs() <= SNAP {
        t = r;
    }
    if t < 0.0 {
        return 0.0;
    }
    let top = (limit - 1) as f64;
    if t >= top {
        return data[((limit - 1) * modes + mode) * nodes + k];
    }
    let n0 = t.floor() as usize;
    let f = t - n0 as f64;
    let a = data[(n0 * modes + mode) * nodes + k];
    if f == 0.0 {
        return a;
    }
    let b = data[((n0 + 1) * modes + mode) * nodes + k];
    (1.0 - f) * a + f * b
}
