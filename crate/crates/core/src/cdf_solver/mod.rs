//! Solvers for uncontrolled PDMPs on a grid.

mod cdf;
mod eulerian;
mod expected;
mod min_cost;
pub(crate) mod scheme;

pub use cdf::{semi_lagrangian_step, solve_cdf, SolveOptions};
pub use eulerian::eulerian_step;
pub use expected::{solve_expected, ValueField};
pub use min_cost::{first_level, restrict_domain, solve_min_cost, MinCostField, Restriction, ARGMIN_TOL};
pub use scheme::Sense;

pub(crate) use cdf::{prepare_feet, sweep};
pub(crate) use expected::{stationary_tau, value_iteration};
pub(crate) use min_cost::{min_cost_field, W0Rates};
