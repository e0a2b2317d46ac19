//! The six builtin example problems with their default numerics.

use serde::{Deserialize, Serialize};

use crate::model::{ControlSet, Domain, ExitSet, FieldSpec, Mode, ProblemSpec, RateBounds, RateMatrix, Rates, TauPolicy};

/// Default discretization parameters for a builtin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub dx: f64,
    pub ds: f64,
    pub s_max: f64,
    #[serde(default)]
    pub tau_policy: TauPolicy,
}

fn two_rates(l12: f64, l21: f64) -> Rates {
    Rates::Fixed(RateMatrix::new(vec![vec![0.0, l12], vec![l21, 0.0]]).expect("valid rates"))
}

/// Two modes on `[0, 1]` moving right/left at unit speed, `lambda = 2`.
pub fn example1() -> ProblemSpec {
    example1_with_rates(2.0, 2.0)
}

pub fn example1_with_rates(l12: f64, l21: f64) -> ProblemSpec {
    ProblemSpec {
        domain: Domain::unit(1),
        exit: ExitSet::Boundary,
        modes: vec![Mode::drift(&[1.0]), Mode::drift(&[-1.0])],
        rates: two_rates(l12, l21),
        controls: ControlSet::Empty,
    }
}

/// Example 1 with unequal speeds: right at 1/2, left at 1.
pub fn example2() -> ProblemSpec {
    ProblemSpec { modes: vec![Mode::drift(&[0.5]), Mode::drift(&[-1.0])], ..example1() }
}

/// Four unit-speed modes on the unit square moving left, up, right, down.
pub fn example3() -> ProblemSpec {
    ProblemSpec {
        domain: Domain::unit(2),
        exit: ExitSet::Boundary,
        modes: vec![
            Mode::drift(&[-1.0, 0.0]),
            Mode::drift(&[0.0, 1.0]),
            Mode::drift(&[1.0, 0.0]),
            Mode::drift(&[0.0, -1.0]),
        ],
        rates: Rates::Fixed(RateMatrix::uniform(4, 1.0).expect("valid rates")),
        controls: ControlSet::Empty,
    }
}

/// Example 1 dynamics with rates known only to lie in `[1, 4]`.
pub fn example4() -> ProblemSpec {
    ProblemSpec { rates: Rates::Bounded(RateBounds::uniform(2, 1.0, 4.0).expect("valid bounds")), ..example1() }
}

/// Controlled 1D problem: `f_i(x, a) = a -/+ 1/2` with `a` in `{-1, 1}`.
pub fn example5() -> ProblemSpec {
    let mode = |v0: f64| Mode {
        dynamics: FieldSpec::ControlOffset { offset: vec![v0] },
        running_cost: FieldSpec::UnitCost,
        exit_cost: FieldSpec::scalar(0.0),
    };
    ProblemSpec {
        domain: Domain::unit(1),
        exit: ExitSet::Boundary,
        modes: vec![mode(0.5), mode(-0.5)],
        rates: two_rates(2.0, 2.0),
        controls: ControlSet::Finite { controls: vec![vec![-1.0], vec![1.0]] },
    }
}

/// Controlled 2D problem: unit-speed steering plus a mode drift of 1/2
/// pointing left, up, right, down; `lambda_ij = 1`.
pub fn example6(directions: usize) -> ProblemSpec {
    let mode = |v0: [f64; 2]| Mode {
        dynamics: FieldSpec::ControlOffset { offset: v0.to_vec() },
        running_cost: FieldSpec::UnitCost,
        exit_cost: FieldSpec::scalar(0.0),
    };
    ProblemSpec {
        domain: Domain::unit(2),
        exit: ExitSet::Boundary,
        modes: vec![mode([-0.5, 0.0]), mode([0.0, 0.5]), mode([0.5, 0.0]), mode([0.0, -0.5])],
        rates: Rates::Fixed(RateMatrix::uniform(4, 1.0).expect("valid rates")),
        controls: ControlSet::UnitCircle { directions },
    }
}

pub const NAMES: [&str; 6] = ["example1", "example2", "example3", "example4", "example5", "example6"];

/// Builtin problem and its default numerics by name.
pub fn builtin(name: &str) -> Option<(ProblemSpec, Numerics)> {
    let fine = Numerics { dx: 1e-3, ds: 1e-3, s_max: 1.0, tau_policy: TauPolicy::Uniform };
    Some(match name {
        "example1" => (example1(), fine),
        "example2" => (example2(), fine),
        "example3" => (example3(), Numerics { dx: 0.01, ds: 0.01, ..fine }),
        "example4" => (example4(), fine),
        "example5" => (example5(), Numerics { dx: 1e-3, ds: 5e-4, s_max: 1.0, tau_policy: TauPolicy::Uniform }),
        "example6" => (
            example6(32),
            Numerics { dx: 5e-3, ds: 5e-3, s_max: 0.5, tau_policy: TauPolicy::BoundaryCapped },
        ),
        _ => return None,
    })
}
