//! Upwind finite-difference form of the scheme, used as a cross-check.

use crate::error::{Error, Result};
use crate::model::{boundary_value, CdfField, Grid, ProblemSpec, SNAP};

/// Next-level values of `mode` from level `n` by the upwind difference
/// `W^{n+1}_k = W^n_k + f ds/dx (W^n_{k+1} - W^n_k) + ds sum_j lambda_ij (W_j - W_i)(x_k + f ds)`.
///
/// Requires a 1D problem, unit running cost in `mode`, positive velocity at
/// every non-exit node and `tau = ds` in `field`.
pub fn eulerian_step(spec: &ProblemSpec, grid: &Grid, field: &CdfField, n: usize, mode: usize) -> Result<Vec<f64>> {
    let pre = |msg: String| Err(Error::Precondition(msg));
    if grid.dim() != 1 {
        return pre("the upwind form is one-dimensional".into());
    }
    if n + 1 >= field.levels() {
        return pre(format!("level {n} has no successor"));
    }
    let ds = grid.ds();
    let dx = grid.dx();
    if (field.tau - ds).abs() > SNAP * ds {
        return pre(format!("tau = {} must equal ds = {ds}", field.tau));
    }
    let rates = spec.fixed_rates()?;
    let nodes = grid.node_count();
    let m = spec.mode_count();
    let mut out = vec![0.0; nodes];
    for k in 0..nodes {
        if grid.is_exit(k) {
            out[k] = boundary_value(grid.exit_cost(mode, k), grid.s(n + 1), ds);
            continue;
        }
        let x = grid.coords(k)[0];
        if (spec.running_cost(mode, &[x]) - 1.0).abs() > SNAP {
            return pre(format!("running cost of mode {mode} at node {k} is not 1"));
        }
        let f = spec.velocity(mode, &[x], None)[0];
        if !(f > 0.0) || f * ds > dx * (1.0 + SNAP) || k + 1 >= nodes {
            return pre(format!("velocity {f} of mode {mode} at node {k} violates 0 < f ds <= dx"));
        }
        let r = f * ds / dx;
        let at = |j: usize, kk: usize| field.get(n, j, kk);
        let foot = |j: usize| (1.0 - r) * at(j, k) + r * at(j, k + 1);
        let mut w = at(mode, k) + r * (at(mode, k + 1) - at(mode, k));
        for j in 0..m {
            if j != mode {
                w += rates.rate(mode, j) * ds * (foot(j) - foot(mode));
            }
        }
        out[k] = w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::cdf_solver::{semi_lagrangian_step, solve_cdf, SolveOptions};
    use crate::model::{build_grid, ProbabilityMethod};

    fn setup(l: f64) -> (ProblemSpec, Grid, CdfField) {
        let spec = catalog::example1_with_rates(l, l);
        let g = build_grid(&spec, 0.01, 0.01, 1.0).unwrap();
        let w = solve_cdf(&spec, &g, &SolveOptions::default(), None).unwrap();
        (spec, g, w)
    }

    #[test]
    fn matches_semi_lagrangian_step() {
        let (spec, g, w) = setup(2.0);
        for n in [0, 10, 50, 99] {
            let e = eulerian_step(&spec, &g, &w, n, 0).unwrap();
            let sl = semi_lagrangian_step(&spec, &g, &w, n, 0, ProbabilityMethod::FirstOrder).unwrap();
            let d = e.iter().zip(&sl).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-12, "level {n}: {d}");
        }
    }

    #[test]
    fn unit_courant_number_is_a_shift() {
        let (spec, g, w) = setup(0.0);
        let e = eulerian_step(&spec, &g, &w, 30, 0).unwrap();
        for k in 1..g.node_count() - 1 {
            assert_eq!(e[k], w.get(30, 0, k + 1));
        }
    }

    #[test]
    fn rejects_leftward_mode() {
        let (spec, g, w) = setup(2.0);
        assert!(matches!(eulerian_step(&spec, &g, &w, 3, 1), Err(Error::Precondition(_))));
    }
}
