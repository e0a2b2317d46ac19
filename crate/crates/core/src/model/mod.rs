//! Problem definitions, grids, grid functions and transition probabilities.

mod field;
mod grid;
mod problem;
mod rates;
mod step;

pub use field::{CdfField, FieldKind};
pub use grid::{build_grid, Grid, GridDescriptor, SNAP};
pub use problem::{ControlSet, Domain, ExitSet, Face, FieldSpec, Mode, ProblemSpec, Side};
pub use rates::{expm_taylor, transition_probabilities, ProbabilityMethod, RateBounds, RateMatrix, Rates, TransitionMatrix};
pub use step::{check_tau, default_tau, TauPolicy};

pub(crate) use grid::{boundary_value, Stencil};
pub(crate) use step::{trace, Foot};
