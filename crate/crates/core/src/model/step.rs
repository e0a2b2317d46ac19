//! Tracing one pseudo-timestep of a characteristic from a grid node.

use serde::{Deserialize, Serialize};

use super::grid::{Grid, SNAP};
use super::problem::ProblemSpec;
use crate::error::{Error, Result};

/// How the pseudo-timestep is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauPolicy {
    /// One `tau` everywhere; requires the CFL-type condition.
    #[default]
    Uniform,
    /// `tau` may carry a foot past the next node; steps that would cross the
    /// boundary are shortened to the crossing.
    BoundaryCapped,
}

/// `tau = ds / min C`, so the cost foot lands on the previous level for constant costs.
pub fn default_tau(spec: &ProblemSpec, grid: &Grid) -> f64 {
    grid.ds() / spec.min_cost()
}

/// Validates `tau` against causality and, for uniform steps, the CFL bound.
pub fn check_tau(spec: &ProblemSpec, grid: &Grid, tau: f64, policy: TauPolicy) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Precondition(format!("tau = {tau} must be positive")));
    }
    if tau * spec.min_cost() < grid.ds() * (1.0 - SNAP) {
        return Err(Error::Numerics(format!(
            "tau * min C = {} is below ds = {}; updates would not be causal",
            tau * spec.min_cost(),
            grid.ds()
        )));
    }
    if policy == TauPolicy::Uniform {
        let ds_max = spec.cfl_max_ds(grid.dx())?;
        if grid.ds() > ds_max * (1.0 + SNAP) || tau * spec.max_speed() > grid.dx() * (1.0 + SNAP) {
            return Err(Error::Cfl { ds: grid.ds(), ds_max, dx: grid.dx() });
        }
    }
    Ok(())
}

/// Where a characteristic step ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Foot {
    /// Interior foot, in index coordinates, after a full step `dt`.
    Inside { t: [f64; 2], dt: f64 },
    /// The step reaches Q at physical point `y` after `dt`.
    Exit { y: [f64; 2], dt: f64 },
    /// The step leaves the domain off Q.
    Escape,
}

/// Follows velocity `v` from node `k` for time `tau`, stopping at the boundary.
pub(crate) fn trace(grid: &Grid, k: usize, v: [f64; 2], tau: f64) -> Foot {
    let dim = grid.dim();
    let idx = grid.split(k);
    let p = [idx[0] as f64, idx[1] as f64];
    let top = grid.max_index();
    let mut d = [0.0; 2];
    let mut theta = 1.0f64;
    for a in 0..dim {
        d[a] = tau * v[a] / grid.dx();
        let q = p[a] + d[a];
        if q < -SNAP {
            theta = theta.min(-p[a] / d[a]);
        } else if q > top[a] + SNAP {
            theta = theta.min((top[a] - p[a]) / d[a]);
        }
    }
    let mut t = [0.0; 2];
    for a in 0..dim {
        t[a] = (p[a] + theta * d[a]).clamp(0.0, top[a]);
    }
    if theta >= 1.0 {
        return Foot::Inside { t, dt: tau };
    }
    for a in 0..dim {
        let r = t[a].round();
        if (t[a] - r).abs() <= SNAP {
            t[a] = r;
        }
    }
    let y = grid.from_index(t);
    if grid.in_exit_set(&y) {
        Foot::Exit { y, dt: theta.max(0.0) * tau }
    } else {
        Foot::Escape
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::{build_grid, ExitSet, Face, Side};

    #[test]
    fn interior_and_truncated_steps() {
        let g = build_grid(&catalog::example1(), 0.1, 0.1, 1.0).unwrap();
        assert_eq!(trace(&g, 3, [1.0, 0.0], 0.1), Foot::Inside { t: [4.0, 0.0], dt: 0.1 });
        match trace(&g, 9, [1.0, 0.0], 0.25) {
            Foot::Exit { y, dt } => {
                assert!((y[0] - 1.0).abs() < 1e-15);
                assert!((dt - 0.1).abs() < 1e-12);
            }
            f => panic!("unexpected {f:?}"),
        }
    }

    #[test]
    fn escape_off_exit_set() {
        let mut s = catalog::example3();
        s.exit = ExitSet::Faces { faces: vec![Face { axis: 0, side: Side::Lo }] };
        let g = build_grid(&s, 0.1, 0.1, 1.0).unwrap();
        let k = g.index(5, 9);
        assert_eq!(trace(&g, k, [0.0, 1.0], 0.2), Foot::Escape);
        assert!(matches!(trace(&g, g.index(1, 5), [-1.0, 0.0], 0.2), Foot::Exit { .. }));
    }

    #[test]
    fn cfl_check() {
        let spec = catalog::example6(32);
        let g = build_grid(&spec, 0.05, 0.05, 0.5).unwrap();
        let tau = default_tau(&spec, &g);
        assert!(matches!(check_tau(&spec, &g, tau, TauPolicy::Uniform), Err(Error::Cfl { .. })));
        assert!(check_tau(&spec, &g, tau, TauPolicy::BoundaryCapped).is_ok());
        assert!(check_tau(&spec, &g, 0.5 * tau, TauPolicy::BoundaryCapped).is_err());
    }
}
