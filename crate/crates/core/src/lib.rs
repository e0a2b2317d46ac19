//! Cumulative-cost distributions for piecewise-deterministic Markov processes.
//!
//! The crate computes CDFs `w_i(x, s) = P(J_i(x) <= s)` of the cost accumulated
//! until exit, bounds on them when switching rates are only known to lie in
//! intervals, and feedback controls maximizing the probability of meeting a
//! cost threshold. A Monte-Carlo simulator serves as an independent check.

pub mod bounds;
pub mod catalog;
pub mod cdf_solver;
pub mod control;
pub mod discrete;
pub mod model;
pub mod simulate;
mod error;

pub use error::{Error, ErrorClass, Result};
pub use model::{
    build_grid, transition_probabilities, CdfField, ControlSet, Domain, ExitSet, FieldKind, FieldSpec, Grid,
    GridDescriptor, Mode, ProbabilityMethod, ProblemSpec, RateBounds, RateMatrix, Rates, TauPolicy,
};
