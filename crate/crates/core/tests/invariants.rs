use pdmp_core::bounds::{solve_bounds, solve_min_cost_bounds};
use pdmp_core::catalog;
use pdmp_core::cdf_solver::{solve_cdf, solve_expected, solve_min_cost, SolveOptions};
use pdmp_core::control::{evaluate_policy_cdf, solve_threshold, synthesize_policy, ThresholdOptions};
use pdmp_core::simulate::{estimate_mean, EmpiricalCdf, Simulator};
use pdmp_core::{build_grid, CdfField, RateBounds, Rates};
use proptest::prelude::*;

fn monotone_in_range(w: &CdfField) -> bool {
    (0..w.levels()).all(|n| {
        (0..w.modes()).all(|i| {
            (0..w.nodes()).all(|k| {
                let v = w.get(n, i, k);
                (0.0..=1.0).contains(&v) && (n == 0 || w.get(n - 1, i, k) <= v + 1e-14)
            })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cdf_is_monotone_and_bounded(l12 in 0.0..6.0f64, l21 in 0.0..6.0f64, v in 0.2..1.0f64) {
        let mut spec = catalog::example1_with_rates(l12, l21);
        spec.modes[0] = pdmp_core::Mode::drift(&[v]);
        let g = build_grid(&spec, 0.01, 0.01, 1.0).unwrap();
        let w = solve_cdf(&spec, &g, &SolveOptions::default(), None).unwrap();
        prop_assert!(monotone_in_range(&w));
    }

    #[test]
    fn wider_rate_intervals_widen_the_bracket(a in 0.5..2.0f64, b in 2.0..4.0f64, grow in 0.0..1.0f64) {
        let mut narrow = catalog::example4();
        narrow.rates = Rates::Bounded(RateBounds::uniform(2, a, b).unwrap());
        let mut wide = narrow.clone();
        wide.rates = Rates::Bounded(RateBounds::uniform(2, (a - grow).max(0.0), b + grow).unwrap());
        let g = build_grid(&narrow, 0.02, 0.02, 1.0).unwrap();
        let opts = SolveOptions::default();
        let p = solve_bounds(&narrow, &g, &opts, None).unwrap();
        let q = solve_bounds(&wide, &g, &opts, None).unwrap();
        for (x, y) in p.upper.values().iter().zip(q.upper.values()) {
            prop_assert!(*y >= x - 1e-12);
        }
        for (x, y) in p.lower.values().iter().zip(q.lower.values()) {
            prop_assert!(*y <= x + 1e-12);
        }
        prop_assert!(monotone_in_range(&q.lower) && monotone_in_range(&q.upper));
    }

    #[test]
    fn threshold_value_dominates_its_fallback(l in 0.5..4.0f64) {
        let mut spec = catalog::example5();
        spec.rates = catalog::example1_with_rates(l, l).rates;
        let g = build_grid(&spec, 0.01, 0.005, 1.0).unwrap();
        let opts = ThresholdOptions { restrict: false, ..Default::default() };
        let tv = solve_threshold(&spec, &g, &opts).unwrap();
        let lift = synthesize_policy(&tv, &spec, &g).unwrap().expectation_lift();
        let fixed = evaluate_policy_cdf(&lift, &spec, &g, &SolveOptions::default()).unwrap();
        for (a, b) in tv.w.values().iter().zip(fixed.values()) {
            prop_assert!(*a >= b - 1e-12);
        }
    }
}

#[test]
fn simulated_mean_matches_expected_cost() {
    let spec = catalog::example1();
    let g = build_grid(&spec, 1e-3, 1e-3, 1.0).unwrap();
    let u = solve_expected(&spec, &g, 1e-12, 100_000).unwrap();
    let sim = Simulator::new(&spec, 21).unwrap();
    for x0 in [0.2, 0.5] {
        let (mean, se) = estimate_mean(&sim.run(&[x0], 0, 40_000)).unwrap();
        let pde = u.get(0, g.node_at(&[x0]).unwrap());
        assert!((mean - pde).abs() < 4.0 * se + 5e-3, "x = {x0}: {mean} +- {se} vs {pde}");
    }
}

#[test]
fn restriction_only_moves_values_near_the_front() {
    let spec = catalog::example2();
    let g = build_grid(&spec, 2e-3, 2e-3, 1.0).unwrap();
    let mc = solve_min_cost(&spec, &g).unwrap();
    let opts = SolveOptions::default();
    let plain = solve_cdf(&spec, &g, &opts, None).unwrap();
    let cut = solve_cdf(&spec, &g, &opts, Some(&mc)).unwrap();
    let k = g.node_at(&[0.4]).unwrap();
    let n = g.levels() - 1;
    for i in 0..2 {
        assert!((plain.get(n, i, k) - cut.get(n, i, k)).abs() < 0.02);
    }
    // s0 ignores rates, so interval rates reproduce the fixed-rate front.
    let mcb = solve_min_cost_bounds(&catalog::example4(), &g).unwrap();
    let mc1 = solve_min_cost(&catalog::example1(), &g).unwrap();
    assert_eq!(mcb.upper.s0_values(), mc1.s0_values());
    assert_eq!(mcb.lower.s0_values(), mc1.s0_values());
}

#[test]
fn mc_cdf_tracks_the_threshold_value() {
    let spec = catalog::example5();
    let g = build_grid(&spec, 2e-3, 1e-3, 1.0).unwrap();
    let tv = solve_threshold(&spec, &g, &ThresholdOptions::default()).unwrap();
    let policy = synthesize_policy(&tv, &spec, &g).unwrap();
    let sim = Simulator::new(&spec, 5).unwrap().with_policy(&policy, Some(0.3)).unwrap();
    let emp = EmpiricalCdf::from_samples(&sim.run(&[0.3], 1, 40_000)).unwrap();
    let w = tv.w.get(300, 1, g.node_at(&[0.3]).unwrap());
    assert!((emp.eval(0.3) - w).abs() < emp.dkw_epsilon(0.01) + 0.02, "{} vs {w}", emp.eval(0.3));
}
