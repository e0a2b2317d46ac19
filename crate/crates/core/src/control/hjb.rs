//! Expectation-optimal control from the stationary HJB system.

use super::policy::{inherit_exit_actions, Policy, PolicyKind};
use crate::cdf_solver::scheme::{Coupling, Scheme};
use crate::cdf_solver::{stationary_tau, value_iteration, ValueField};
use crate::error::{Error, Result};
use crate::model::{Grid, ProbabilityMethod, ProblemSpec};

/// `u_i(x) = min_a { tau C_i + sum_j p_ij(tau) u_j(x + tau f_i(x, a)) }` by
/// Gauss-Seidel sweeps; ties in the argmin go to the lowest action index.
pub fn solve_hjb_expectation(spec: &ProblemSpec, grid: &Grid, tol: f64, max_iter: usize) -> Result<(ValueField, Policy)> {
    if !spec.is_controlled() {
        return Err(Error::Precondition("solve_hjb_expectation needs a control set".into()));
    }
    let rates = spec.fixed_rates()?;
    let tau = stationary_tau(spec, grid)?;
    let scheme = Scheme::new(spec, grid, tau);
    let coupling = Coupling::fixed(rates, tau, ProbabilityMethod::FirstOrder)?;
    let u = value_iteration(&scheme, &coupling, tol, max_iter)?;
    let mut table = u.actions.clone();
    inherit_exit_actions(grid, &mut table);
    let policy =
        Policy::new(PolicyKind::Expectation, grid.descriptor(), spec.controls.clone(), spec.mode_count(), table.clone(), table)?;
    Ok((u, policy))
}
