//! Upward sweep in `s` for the CDF of an uncontrolled (or policy-frozen) PDMP.

use rayon::prelude::*;

use super::min_cost::{restrict_domain, MinCostField, Restriction};
use super::scheme::{Coupling, Prepared, Scheme};
use crate::error::{Error, Result};
use crate::model::{boundary_value, check_tau, default_tau, CdfField, FieldKind, Grid, ProbabilityMethod, ProblemSpec, TauPolicy};

/// Step choice and transition-probability method for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    /// Pseudo-timestep; `None` means `ds / min C`.
    pub tau: Option<f64>,
    pub tau_policy: TauPolicy,
    pub method: ProbabilityMethod,
}

impl SolveOptions {
    pub fn with_policy(tau_policy: TauPolicy) -> Self {
        SolveOptions { tau_policy, ..Default::default() }
    }

    pub(crate) fn resolve_tau(&self, spec: &ProblemSpec, grid: &Grid) -> Result<f64> {
        let tau = self.tau.unwrap_or_else(|| default_tau(spec, grid));
        check_tau(spec, grid, tau, self.tau_policy)?;
        Ok(tau)
    }
}

/// Feet of one action per (mode, node), computed once for the whole sweep.
pub(crate) fn prepare_feet(scheme: &Scheme, action_of: &(dyn Fn(usize, usize) -> usize + Sync)) -> Vec<Prepared> {
    let nodes = scheme.grid.node_count();
    (0..scheme.modes() * nodes)
        .into_par_iter()
        .map(|idx| {
            let (i, k) = (idx / nodes, idx % nodes);
            if scheme.grid.is_exit(k) {
                Prepared::Escape
            } else {
                scheme.prepare(scheme.foot(i, k, action_of(i, k), scheme.tau))
            }
        })
        .collect()
}

/// One semi-Lagrangian update of node `k`, mode `i`, at level `n`.
#[inline]
fn update(
    scheme: &Scheme,
    coupling: &Coupling,
    foot: &Prepared,
    below: &[f64],
    n: usize,
    i: usize,
    k: usize,
    vals: &mut [f64],
) -> f64 {
    if let Prepared::Escape = foot {
        return 0.0;
    }
    let dt = foot.dt();
    let ts = n as f64 - dt * scheme.cost(i, k) / scheme.grid.ds();
    scheme.values(foot, ts, below, n, vals);
    coupling.apply(i, dt, vals)
}

/// Generic sweep shared by the plain, bound and policy-evaluation solvers.
pub(crate) fn sweep(
    scheme: &Scheme,
    coupling: &Coupling,
    feet: &[Prepared],
    restriction: Option<&Restriction>,
    kind: FieldKind,
) -> CdfField {
    let grid = scheme.grid;
    let nodes = grid.node_count();
    let m = scheme.modes();
    let mut field = CdfField::zeros(grid, scheme.tau, kind);
    for n in 0..grid.levels() {
        let s = grid.s(n);
        let (below, cur) = field.split_at_level(n);
        cur.par_chunks_mut(nodes).enumerate().for_each(|(i, row)| {
            let mut vals = vec![0.0; m];
            for (k, out) in row.iter_mut().enumerate() {
                *out = if grid.is_exit(k) {
                    boundary_value(grid.exit_cost(i, k), s, grid.ds())
                } else if let Some(r) = restriction {
                    let n0 = r.first_level[k];
                    if n < n0 {
                        0.0
                    } else if n == n0 {
                        r.seed[i * nodes + k]
                    } else {
                        update(scheme, coupling, &feet[i * nodes + k], below, n, i, k, &mut vals)
                    }
                } else if n == 0 {
                    0.0
                } else {
                    update(scheme, coupling, &feet[i * nodes + k], below, n, i, k, &mut vals)
                };
            }
        });
    }
    field
}

/// CDF of the cumulative exit cost, `W_i(x_k, s_n)`, optionally restricted
/// to `s >= s0(x)` using precomputed minimal costs.
pub fn solve_cdf(
    spec: &ProblemSpec,
    grid: &Grid,
    opts: &SolveOptions,
    restrict: Option<&MinCostField>,
) -> Result<CdfField> {
    let rates = spec.fixed_rates()?;
    if spec.is_controlled() && spec.controls.len() > 1 {
        return Err(Error::Precondition(
            "solve_cdf needs an uncontrolled problem; use evaluate_policy_cdf or solve_threshold".into(),
        ));
    }
    let tau = opts.resolve_tau(spec, grid)?;
    let scheme = Scheme::new(spec, grid, tau);
    let coupling = Coupling::fixed(rates, tau, opts.method)?;
    let feet = prepare_feet(&scheme, &|_, _| 0);
    let restriction = restrict.map(|mc| restrict_domain(mc, grid));
    Ok(sweep(&scheme, &coupling, &feet, restriction.as_ref(), FieldKind::Cdf))
}

/// Applies the scheme once, reading level `n` of `field` and returning the
/// values of mode `mode` at level `n + 1`. Exit nodes get the boundary value.
pub fn semi_lagrangian_step(
    spec: &ProblemSpec,
    grid: &Grid,
    field: &CdfField,
    n: usize,
    mode: usize,
    method: ProbabilityMethod,
) -> Result<Vec<f64>> {
    if n + 1 >= field.levels() {
        return Err(Error::Precondition(format!("level {n} has no successor")));
    }
    let rates = spec.fixed_rates()?;
    let tau = field.tau;
    let scheme = Scheme::new(spec, grid, tau);
    let coupling = Coupling::fixed(rates, tau, method)?;
    let nodes = grid.node_count();
    let below = &field.values()[..(n + 1) * spec.mode_count() * nodes];
    let mut vals = vec![0.0; spec.mode_count()];
    Ok((0..nodes)
        .map(|k| {
            if grid.is_exit(k) {
                boundary_value(grid.exit_cost(mode, k), grid.s(n + 1), grid.ds())
            } else {
                let foot = scheme.prepare(scheme.foot(mode, k, 0, tau));
                update(&scheme, &coupling, &foot, below, n + 1, mode, k, &mut vals)
            }
        })
        .collect())
}
