//! CDF bounds when switching rates may vary in time within intervals.

use rayon::prelude::*;

use crate::cdf_solver::{
    min_cost_field, prepare_feet, restrict_domain, solve_cdf, solve_min_cost, sweep, MinCostField, SolveOptions,
    W0Rates,
};
use crate::cdf_solver::scheme::{Coupling, Scheme};
pub use crate::cdf_solver::Sense;
use crate::error::{Error, Result};
use crate::model::{CdfField, FieldKind, Grid, ProblemSpec, RateBounds, RateMatrix, Rates};

/// Rate in `[lower, upper]` extremizing `rate * d`: for `Min` the upper end
/// when `d <= 0`, for `Max` the upper end when `d >= 0`.
#[inline]
pub fn optimal_rate(d: f64, lower: f64, upper: f64, sense: Sense) -> f64 {
    let high = match sense {
        Sense::Min => d <= 0.0,
        Sense::Max => d >= 0.0,
    };
    if high {
        upper
    } else {
        lower
    }
}

/// Adversarial rates out of `mode` given `diffs[j] = w_j - w_mode`; the
/// diagonal entry is 0.
pub fn optimal_rates_pointwise(diffs: &[f64], bounds: &RateBounds, sense: Sense, mode: usize) -> Vec<f64> {
    diffs
        .iter()
        .enumerate()
        .map(|(j, &d)| if j == mode { 0.0 } else { optimal_rate(d, bounds.lower(mode, j), bounds.upper(mode, j), sense) })
        .collect()
}

/// Interval bounds of a problem; fixed rates give a degenerate interval.
pub fn rate_bounds(spec: &ProblemSpec) -> RateBounds {
    match &spec.rates {
        Rates::Fixed(r) => RateBounds::degenerate(r),
        Rates::Bounded(b) => b.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundPair {
    pub lower: CdfField,
    pub upper: CdfField,
    pub bounds: RateBounds,
}

impl BoundPair {
    /// Largest amount by which `lower` exceeds `upper` (non-positive when ordered).
    pub fn max_inversion(&self) -> f64 {
        self.lower.values().iter().zip(self.upper.values()).map(|(l, u)| l - u).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest violation of `lower <= field <= upper`.
    pub fn bracket_violation(&self, field: &CdfField) -> f64 {
        let lo = self.lower.values().iter().zip(field.values()).map(|(l, w)| l - w);
        let hi = field.values().iter().zip(self.upper.values()).map(|(w, u)| w - u);
        lo.chain(hi).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `w0` under the best (`upper`) and worst (`lower`) rate sequences; both
/// share the rate-independent `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinCostBounds {
    pub upper: MinCostField,
    pub lower: MinCostField,
}

pub fn solve_min_cost_bounds(spec: &ProblemSpec, grid: &Grid) -> Result<MinCostBounds> {
    let b = rate_bounds(spec);
    Ok(MinCostBounds {
        upper: min_cost_field(spec, grid, W0Rates::Bounded(&b, Sense::Max)),
        lower: min_cost_field(spec, grid, W0Rates::Bounded(&b, Sense::Min)),
    })
}

/// Upper and lower CDFs over all measurable rate schedules within the bounds.
/// Uses first-order probabilities; `opts.method` is ignored.
pub fn solve_bounds(
    spec: &ProblemSpec,
    grid: &Grid,
    opts: &SolveOptions,
    restrict: Option<&MinCostBounds>,
) -> Result<BoundPair> {
    let bounds = rate_bounds(spec);
    let tau = opts.resolve_tau(spec, grid)?;
    if tau * bounds.max_exit_rate() > 1.0 + 1e-12 {
        return Err(Error::Numerics(format!(
            "tau * max_i sum_j b_ij = {} exceeds 1; implied probabilities would be negative",
            tau * bounds.max_exit_rate()
        )));
    }
    let scheme = Scheme::new(spec, grid, tau);
    let feet = prepare_feet(&scheme, &|_, _| 0);
    let solve = |sense: Sense, kind: FieldKind, mc: Option<&MinCostField>| {
        let coupling = Coupling::Bounded { bounds: &bounds, sense };
        let r = mc.map(|mc| restrict_domain(mc, grid));
        sweep(&scheme, &coupling, &feet, r.as_ref(), kind)
    };
    let (upper, lower) = rayon::join(
        || solve(Sense::Max, FieldKind::Upper, restrict.map(|r| &r.upper)),
        || solve(Sense::Min, FieldKind::Lower, restrict.map(|r| &r.lower)),
    );
    Ok(BoundPair { lower, upper, bounds })
}

/// `(lambda_12, lambda_21)` over the product `values x values` for two modes.
pub fn pair_grid(values: &[f64]) -> Result<Vec<RateMatrix>> {
    let mut out = Vec::with_capacity(values.len() * values.len());
    for &a in values {
        for &b in values {
            out.push(RateMatrix::new(vec![vec![0.0, a], vec![b, 0.0]])?);
        }
    }
    Ok(out)
}

/// Plain CDFs for each fixed rate matrix, all of which must lie within the
/// problem's bounds. With `restrict`, each solve uses its own `s0`, `w0`.
pub fn fixed_rate_sweep(
    spec: &ProblemSpec,
    grid: &Grid,
    opts: &SolveOptions,
    rate_grid: &[RateMatrix],
    restrict: bool,
) -> Result<Vec<CdfField>> {
    let bounds = rate_bounds(spec);
    for (n, r) in rate_grid.iter().enumerate() {
        if r.modes() != bounds.modes() || !bounds.contains(r, 1e-12) {
            return Err(Error::Model(format!("rate matrix #{n} lies outside the rate bounds")));
        }
    }
    rate_grid
        .par_iter()
        .map(|r| {
            let fixed = ProblemSpec { rates: Rates::Fixed(r.clone()), ..spec.clone() };
            let mc = if restrict { Some(solve_min_cost(&fixed, grid)?) } else { None };
            solve_cdf(&fixed, grid, opts, mc.as_ref())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::build_grid;

    #[test]
    fn pointwise_rule() {
        assert_eq!(optimal_rate(-0.3, 1.0, 4.0, Sense::Min), 4.0);
        assert_eq!(optimal_rate(0.0, 1.0, 4.0, Sense::Min), 4.0);
        assert_eq!(optimal_rate(0.3, 1.0, 4.0, Sense::Min), 1.0);
        assert_eq!(optimal_rate(0.3, 1.0, 4.0, Sense::Max), 4.0);
        assert_eq!(optimal_rate(-0.3, 1.0, 4.0, Sense::Max), 1.0);
        let b = RateBounds::uniform(3, 1.0, 4.0).unwrap();
        assert_eq!(optimal_rates_pointwise(&[0.2, 0.0, -0.1], &b, Sense::Min, 1), vec![1.0, 0.0, 4.0]);
    }

    #[test]
    fn degenerate_interval_reproduces_plain_cdf() {
        let spec = catalog::example1();
        let g = build_grid(&spec, 0.01, 0.01, 1.0).unwrap();
        let opts = SolveOptions::default();
        let mc = solve_min_cost(&spec, &g).unwrap();
        let mcb = solve_min_cost_bounds(&spec, &g).unwrap();
        for k in 0..g.node_count() {
            for i in 0..2 {
                assert!((mcb.upper.w0(i, k) - mc.w0(i, k)).abs() <= 1e-12);
                assert!((mcb.lower.w0(i, k) - mc.w0(i, k)).abs() <= 1e-12);
            }
        }
        let w = solve_cdf(&spec, &g, &opts, Some(&mc)).unwrap();
        let pair = solve_bounds(&spec, &g, &opts, Some(&mcb)).unwrap();
        for (f, name) in [(&pair.lower, "lower"), (&pair.upper, "upper")] {
            let d = f.values().iter().zip(w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-12, "{name}: {d}");
        }
    }

    #[test]
    fn best_case_probability_bounds() {
        let spec = catalog::example4();
        let g = build_grid(&spec, 1e-3, 1e-3, 1.0).unwrap();
        let mcb = solve_min_cost_bounds(&spec, &g).unwrap();
        for &x in &[0.6, 0.75, 0.9] {
            let k = g.node_at(&[x]).unwrap();
            assert!((mcb.upper.w0(0, k) - (-(1.0 - x)).exp()).abs() < 2e-3);
            assert!((mcb.lower.w0(0, k) - (-4.0 * (1.0 - x)).exp()).abs() < 4e-3);
        }
    }

    #[test]
    fn rejects_large_step() {
        let spec = catalog::example4();
        let g = build_grid(&spec, 0.5, 0.5, 1.0).unwrap();
        assert!(matches!(solve_bounds(&spec, &g, &SolveOptions::default(), None), Err(Error::Numerics(_))));
    }

    #[test]
    fn sweep_rejects_rates_outside_bounds() {
        let spec = catalog::example4();
        let g = build_grid(&spec, 0.1, 0.1, 1.0).unwrap();
        let bad = pair_grid(&[0.5]).unwrap();
        assert!(fixed_rate_sweep(&spec, &g, &SolveOptions::default(), &bad, false).is_err());
    }

    #[test]
    fn swapped_rates_mirror() {
        let spec = catalog::example4();
        let g = build_grid(&spec, 0.01, 0.01, 1.0).unwrap();
        let rates = vec![
            RateMatrix::new(vec![vec![0.0, 1.0], vec![3.0, 0.0]]).unwrap(),
            RateMatrix::new(vec![vec![0.0, 3.0], vec![1.0, 0.0]]).unwrap(),
        ];
        let f = fixed_rate_sweep(&spec, &g, &SolveOptions::default(), &rates, true).unwrap();
        let last = g.node_count() - 1;
        for n in 0..g.levels() {
            for k in 0..=last {
                assert!((f[0].get(n, 0, k) - f[1].get(n, 1, last - k)).abs() <= 1e-12);
            }
        }
    }
}
