//! Expected exit cost by semi-Lagrangian value iteration.

use super::scheme::{Coupling, Prepared, Scheme};
use crate::error::{Error, Result};
use crate::model::{Grid, ProbabilityMethod, ProblemSpec};

/// A stationary grid function `u_i(x_k)`, with the action table when it came
/// from an optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    modes: usize,
    nodes: usize,
    values: Vec<f64>,
    pub tau: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Minimizing action index `[mode][node]` (all zero when uncontrolled).
    pub actions: Vec<u16>,
}

impl ValueField {
    pub fn get(&self, mode: usize, k: usize) -> f64 {
        self.values[mode * self.nodes + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn action(&self, mode: usize, k: usize) -> usize {
        self.actions[mode * self.nodes + k] as usize
    }

    pub fn interpolate(&self, grid: &Grid, mode: usize, x: &[f64]) -> Result<f64> {
        if !grid.contains(x) {
            return Err(Error::Precondition(format!("point {x:?} lies outside the domain")));
        }
        let st = grid.stencil(grid.to_index(x));
        Ok(stencil_sum(&st, &self.values[mode * self.nodes..(mode + 1) * self.nodes]))
    }
}

fn stencil_sum(st: &crate::model::Stencil, row: &[f64]) -> f64 {
    let mut v = 0.0;
    for c in 0..st.len {
        v += st.weights[c] * row[st.nodes[c]];
    }
    v
}

/// Pseudo-timestep for stationary problems: one cell at the fastest speed.
pub(crate) fn stationary_tau(spec: &ProblemSpec, grid: &Grid) -> Result<f64> {
    let speed = spec.max_speed();
    if !(speed > 0.0) {
        return Err(Error::Precondition("all dynamics vanish; no characteristic reaches Q".into()));
    }
    Ok(grid.dx() / speed)
}

/// `dt C + sum_j p_ij(dt) u_j(foot)` for one prepared foot.
#[inline]
fn bellman_term(
    scheme: &Scheme,
    coupling: &Coupling,
    u: &[f64],
    i: usize,
    k: usize,
    foot: &Prepared,
    vals: &mut [f64],
) -> f64 {
    let nodes = scheme.grid.node_count();
    match foot {
        Prepared::Inside { st, .. } => {
            for (j, v) in vals.iter_mut().enumerate() {
                *v = stencil_sum(st, &u[j * nodes..(j + 1) * nodes]);
            }
        }
        Prepared::Exit { q, .. } => vals.copy_from_slice(q),
        Prepared::Escape => return f64::INFINITY,
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    foot.dt() * scheme.cost(i, k) + coupling.apply(i, foot.dt(), vals)
}

/// Axis directions of sweep `t`: 1D alternates, 2D cycles through all four
/// orderings.
fn sweep_direction(t: usize, dim: usize) -> (bool, bool) {
    if dim == 1 {
        (t % 2 == 1, false)
    } else {
        (t % 2 == 1, (t / 2) % 2 == 1)
    }
}

/// Gauss-Seidel value iteration minimizing over the scheme's actions, with
/// lexicographic sweeps alternating direction.
pub(crate) fn value_iteration(scheme: &Scheme, coupling: &Coupling, tol: f64, max_iter: usize) -> Result<ValueField> {
    let grid = scheme.grid;
    let m = scheme.modes();
    let nodes = grid.node_count();
    let na = scheme.actions.len();
    let mut u = vec![0.0; m * nodes];
    for i in 0..m {
        for k in (0..nodes).filter(|&k| grid.is_exit(k)) {
            u[i * nodes + k] = grid.exit_cost(i, k);
        }
    }
    let mut vals = vec![0.0; m];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        residual = 0.0f64;
        let [nx, ny] = grid.shape();
        let (flip_x, flip_y) = sweep_direction(iterations - 1, grid.dim());
        for idx in 0..nodes {
            let (mut ix, mut iy) = (idx % nx, idx / nx);
            if flip_x {
                ix = nx - 1 - ix;
            }
            if flip_y {
                iy = ny - 1 - iy;
            }
            let k = grid.index(ix, iy);
            if grid.is_exit(k) {
                continue;
            }
            for i in 0..m {
                let mut best = f64::INFINITY;
                for a in 0..na {
                    let foot = scheme.prepare(scheme.foot(i, k, a, scheme.tau));
                    best = best.min(bellman_term(scheme, coupling, &u, i, k, &foot, &mut vals));
                }
                let old = u[i * nodes + k];
                if best != old {
                    residual = residual.max((best - old).abs());
                }
                u[i * nodes + k] = best;
            }
        }
        if residual < tol {
            break;
        }
    }
    if !(residual < tol) {
        return Err(Error::NonConvergence { iterations, residual });
    }
    let mut actions = vec![0u16; m * nodes];
    if na > 1 {
        for k in (0..nodes).filter(|&k| !grid.is_exit(k)) {
            for i in 0..m {
                let mut best = (f64::INFINITY, 0usize);
                for a in 0..na {
                    let foot = scheme.prepare(scheme.foot(i, k, a, scheme.tau));
                    let v = bellman_term(scheme, coupling, &u, i, k, &foot, &mut vals);
                    if v < best.0 - 1e-12 * (1.0 + v.abs()) {
                        best = (v, a);
                    }
                }
                actions[i * nodes + k] = best.1 as u16;
            }
        }
    }
    Ok(ValueField { modes: m, nodes, values: u, tau: scheme.tau, iterations, residual, actions })
}

/// Expected cumulative exit cost `u_i(x_k)` of an uncontrolled problem.
pub fn solve_expected(spec: &ProblemSpec, grid: &Grid, tol: f64, max_iter: usize) -> Result<ValueField> {
    let rates = spec.fixed_rates()?;
    if spec.is_controlled() && spec.controls.len() > 1 {
        return Err(Error::Precondition("solve_expected needs an uncontrolled problem; use solve_hjb".into()));
    }
    let tau = stationary_tau(spec, grid)?;
    let scheme = Scheme::new(spec, grid, tau);
    let coupling = Coupling::fixed(rates, tau, ProbabilityMethod::FirstOrder)?;
    value_iteration(&scheme, &coupling, tol, max_iter)
}
