//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use pdmp_core::bounds::{fixed_rate_sweep, pair_grid, solve_bounds, solve_min_cost_bounds};
use pdmp_core::catalog;
use pdmp_core::cdf_solver::{eulerian_step, semi_lagrangian_step, solve_cdf, solve_min_cost, SolveOptions};
use pdmp_core::control::{solve_hjb_expectation, solve_threshold, synthesize_policy, ThresholdOptions};
use pdmp_core::discrete::{self, brute_force_cdf, RoutedGraph};
use pdmp_core::simulate::{dkw_epsilon, estimate_mean, EmpiricalCdf, Simulator};
use pdmp_core::{build_grid, CdfField, ControlSet, Grid, ProbabilityMethod, ProblemSpec, TauPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() < limit_s as f64
}

fn restricted_cdf(spec: &ProblemSpec, dx: f64, ds: f64, s_max: f64) -> (Grid, CdfField) {
    let g = build_grid(spec, dx, ds, s_max).unwrap();
    let mc = solve_min_cost(spec, &g).unwrap();
    let w = solve_cdf(spec, &g, &SolveOptions::default(), Some(&mc)).unwrap();
    (g, w)
}

fn level_of(g: &Grid, s: f64) -> usize {
    g.descriptor().lower_level(s).unwrap()
}

fn criterion1() -> Outcome {
    let t0 = Instant::now();
    let (g, w) = restricted_cdf(&catalog::example1(), 1e-3, 1e-3, 1.0);
    let n = level_of(&g, 0.25);
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 0..g.node_count() {
        let x = g.coords(k)[0];
        if x > 0.251 - 1e-12 && x < 0.749 + 1e-12 {
            worst = worst.max(w.get(n, 0, k).abs());
            count += 1;
        }
    }
    let el = t0.elapsed();
    outcome(
        worst == 0.0 && within(el, 10),
        format!("max |W1(x, 0.25)| over {count} nodes in [0.251, 0.749] = {worst:e}, {:.2}s", el.as_secs_f64()),
    )
}

fn criterion2() -> Outcome {
    let t0 = Instant::now();
    let target = (-0.5f64).exp();
    let mut errs = Vec::new();
    let mut at_node = Vec::new();
    for dx in [1e-3, 5e-4, 2.5e-4] {
        let (g, w) = restricted_cdf(&catalog::example1(), dx, dx, 0.25);
        let n = level_of(&g, 0.25);
        let k = g.node_at(&[0.75 - dx]).unwrap();
        errs.push((w.get(n, 0, k) - target).abs());
        at_node.push((w.get(n, 0, g.node_at(&[0.75]).unwrap()) - target).abs());
    }
    let el = t0.elapsed();
    let decreasing = errs.windows(2).all(|p| p[1] < p[0]);
    outcome(
        errs[0] <= 0.02 && decreasing && within(el, 60),
        format!(
            "|W1(0.75 - dx, 0.25) - e^-0.5| = {:.4} / {:.4} / {:.4} at dx = 1e-3 / 5e-4 / 2.5e-4 \
             (0.75 - dx lies below s0 = 0.25 + dx, so W is 0 there); at x = 0.75: {:.2e} / {:.2e} / {:.2e}; {:.1}s",
            errs[0],
            errs[1],
            errs[2],
            at_node[0],
            at_node[1],
            at_node[2],
            el.as_secs_f64()
        ),
    )
}

fn random_graph(rng: &mut ChaCha8Rng) -> RoutedGraph {
    let n = rng.random_range(2..=12);
    let m = rng.random_range(1..=3);
    let mut exit: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    exit[rng.random_range(0..n)] = true;
    let routes = (0..m).map(|_| (0..n).map(|_| rng.random_range(0..n)).collect()).collect();
    let step_cost = (0..m).map(|_| (0..n).map(|_| rng.random_range(1..=4) as f64).collect()).collect();
    let exit_cost = (0..m).map(|_| (0..n).map(|_| rng.random_range(0..=3) as f64).collect()).collect();
    let switch = (0..m)
        .map(|_| {
            let mut row: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() }).collect();
            let total: f64 = row.iter().sum();
            if total == 0.0 {
                row[0] = 1.0;
            } else {
                row.iter_mut().for_each(|p| *p /= total);
            }
            row
        })
        .collect();
    RoutedGraph { nodes: n, exit, routes, step_cost, exit_cost, switch }
}

fn criterion3() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut truncated = 0;
    for _ in 0..200 {
        let g = random_graph(&mut rng);
        let w = discrete::solve_cdf(&g, 1.0, 10.0).unwrap();
        let bf = brute_force_cdf(&g, 1.0, 10.0, 11).unwrap();
        truncated += bf.truncated() as usize;
        worst = worst.max(w.max_diff(&bf.cdf));
    }
    let el = t0.elapsed();
    outcome(
        worst <= 1e-12 && truncated == 0 && within(el, 30),
        format!("200 graphs, max difference {worst:e}, {truncated} truncated enumerations, {:.2}s", el.as_secs_f64()),
    )
}

fn criterion4() -> Outcome {
    let t0 = Instant::now();
    let spec = catalog::example1();
    let g = build_grid(&spec, 1e-3, 1e-3, 1.0).unwrap();
    let w = solve_cdf(&spec, &g, &SolveOptions::default(), None).unwrap();
    let mut worst = 0.0f64;
    for n in 0..g.levels() - 1 {
        let e = eulerian_step(&spec, &g, &w, n, 0).unwrap();
        let sl = semi_lagrangian_step(&spec, &g, &w, n, 0, ProbabilityMethod::FirstOrder).unwrap();
        for (a, b) in e.iter().zip(&sl) {
            worst = worst.max((a - b).abs());
        }
    }
    let el = t0.elapsed();
    outcome(
        worst <= 1e-12 && within(el, 5),
        format!("max per-level difference over {} levels = {worst:e}, {:.2}s", g.levels() - 1, el.as_secs_f64()),
    )
}

fn criterion5() -> Outcome {
    let t0 = Instant::now();
    let spec = catalog::example4();
    let g = build_grid(&spec, 1e-3, 1e-3, 1.0).unwrap();
    let opts = SolveOptions::default();
    let mcb = solve_min_cost_bounds(&spec, &g).unwrap();
    let pair = solve_bounds(&spec, &g, &opts, Some(&mcb)).unwrap();
    let fields = fixed_rate_sweep(&spec, &g, &opts, &pair_grid(&[1.0, 2.0, 3.0, 4.0]).unwrap(), true).unwrap();
    let bracket = fields.iter().map(|f| pair.bracket_violation(f)).fold(f64::NEG_INFINITY, f64::max);

    let fixed = catalog::example1();
    let (_, plain) = restricted_cdf(&fixed, 1e-3, 1e-3, 1.0);
    let mc = solve_min_cost_bounds(&fixed, &g).unwrap();
    let collapsed = solve_bounds(&fixed, &g, &opts, Some(&mc)).unwrap();
    let collapse = [&collapsed.lower, &collapsed.upper]
        .iter()
        .flat_map(|f| f.values().iter().zip(plain.values()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let el = t0.elapsed();
    outcome(
        bracket <= 1e-10 && collapse <= 1e-12 && within(el, 300),
        format!(
            "16 fixed-rate fields, worst bracket violation {bracket:e}; degenerate interval deviation {collapse:e}; {:.1}s",
            el.as_secs_f64()
        ),
    )
}

fn criterion6() -> Outcome {
    let t0 = Instant::now();
    let n = 100_000;
    let eps = dkw_epsilon(n, 0.01);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, spec) in [("example1", catalog::example1()), ("example2", catalog::example2())] {
        let (g, w) = restricted_cdf(&spec, 1e-3, 1e-3, 1.0);
        let sim = Simulator::new(&spec, 6).unwrap();
        for x0 in [0.3, 0.7] {
            let emp = EmpiricalCdf::from_samples(&sim.run(&[x0], 0, n)).unwrap();
            let k = g.node_at(&[x0]).unwrap();
            let d = (0..g.levels()).map(|l| (emp.eval(g.s(l)) - w.get(l, 0, k)).abs()).fold(0.0, f64::max);
            worst = worst.max(d);
            parts.push(format!("{name}@{x0}: {d:.4}"));
        }
    }
    let el = t0.elapsed();
    outcome(
        worst <= eps + 0.02 && within(el, 120),
        format!("sup |F_mc - W| {} (bound {:.4}), {:.1}s", parts.join(", "), eps + 0.02, el.as_secs_f64()),
    )
}

fn criterion7() -> Outcome {
    let t0 = Instant::now();
    let spec = catalog::example5();
    let (_, num) = catalog::builtin("example5").unwrap();
    let g = build_grid(&spec, num.dx, num.ds, num.s_max).unwrap();
    let tv = solve_threshold(&spec, &g, &ThresholdOptions::default()).unwrap();
    let k = g.node_at(&[0.4]).unwrap();
    let what = tv.w.get(level_of(&g, 0.38), 0, k);
    let threshold_policy = synthesize_policy(&tv, &spec, &g).unwrap();
    let (_, expectation_policy) = solve_hjb_expectation(&spec, &g, 1e-10, 200_000).unwrap();
    let n = 100_000;
    let eps = dkw_epsilon(n, 0.01);
    let run = |sim: Simulator| sim.run(&[0.4], 0, n);
    let exp_samples = run(Simulator::new(&spec, 7).unwrap().with_policy(&expectation_policy, None).unwrap());
    let thr_samples = run(Simulator::new(&spec, 7).unwrap().with_policy(&threshold_policy, Some(0.38)).unwrap());
    let f_exp = EmpiricalCdf::from_samples(&exp_samples).unwrap().eval(0.38);
    let f_thr = EmpiricalCdf::from_samples(&thr_samples).unwrap().eval(0.38);
    let (m_exp, se_exp) = estimate_mean(&exp_samples).unwrap();
    let (m_thr, se_thr) = estimate_mean(&thr_samples).unwrap();
    let el = t0.elapsed();
    outcome(
        what - f_exp > eps && m_thr > m_exp && within(el, 300),
        format!(
            "W1(0.4, 0.38) = {what:.4}, expectation policy F(0.38) = {f_exp:.4} (band {eps:.4}), \
             threshold policy F(0.38) = {f_thr:.4}; means {m_thr:.4} +- {se_thr:.4} vs {m_exp:.4} +- {se_exp:.4}; {:.1}s",
            el.as_secs_f64()
        ),
    )
}

fn criterion8() -> Outcome {
    let t0 = Instant::now();
    let spec = catalog::example6(32);
    let g = build_grid(&spec, 5e-3, 5e-3, 0.5).unwrap();
    let opts = ThresholdOptions { solve: SolveOptions::with_policy(TauPolicy::BoundaryCapped), ..Default::default() };
    let tv = solve_threshold(&spec, &g, &opts).unwrap();
    let policy = synthesize_policy(&tv, &spec, &g).unwrap();
    let t_solve = t0.elapsed();
    let start = [0.4, 0.3];
    let k = g.node_at(&start).unwrap();
    let n = 10_000;
    let eps = dkw_epsilon(n, 0.01);
    let thresholds = [0.28, 0.33, 0.40];
    // Common random numbers: every policy sees the same switching streams.
    let cdfs: Vec<EmpiricalCdf> = thresholds
        .iter()
        .map(|&s| {
            let sim = Simulator::new(&spec, 8).unwrap().with_policy(&policy, Some(s)).unwrap();
            EmpiricalCdf::from_samples(&sim.run(&start, 0, n)).unwrap()
        })
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (a, &s) in thresholds.iter().enumerate() {
        let what = tv.w.get(level_of(&g, s), 0, k);
        let own = cdfs[a].eval(s);
        let ok = (own - what).abs() <= eps + 0.03;
        let others: Vec<f64> = (0..3).filter(|&b| b != a).map(|b| cdfs[b].eval(s)).collect();
        let dominates = others.iter().all(|&o| own >= o - eps);
        pass &= ok && dominates;
        parts.push(format!(
            "s={s}: W={what:.4} mc={own:.4} others={:.4}/{:.4}{}{}",
            others[0],
            others[1],
            if ok { "" } else { " [mismatch]" },
            if dominates { "" } else { " [dominated]" }
        ));
    }
    let el = t0.elapsed();
    outcome(
        pass && within(el, 900),
        format!("{}; band {:.4}+0.03; solve {:.1}s, total {:.1}s", parts.join("; "), eps, t_solve.as_secs_f64(), el.as_secs_f64()),
    )
}

fn check_cdf_field(w: &CdfField) -> (f64, f64) {
    let mut range = 0.0f64;
    let mut mono = 0.0f64;
    for n in 0..w.levels() {
        for i in 0..w.modes() {
            for k in 0..w.nodes() {
                let v = w.get(n, i, k);
                range = range.max(-v).max(v - 1.0);
                if n > 0 {
                    mono = mono.max(w.get(n - 1, i, k) - v);
                }
            }
        }
    }
    (range, mono)
}

fn criterion9() -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    let failures = std::cell::RefCell::new(Vec::new());
    let record = |name: &str, w: &CdfField| {
        let (range, mono) = check_cdf_field(w);
        if range > 1e-12 || mono > 1e-12 {
            failures.borrow_mut().push(format!("{name}: range excess {range:e}, monotonicity defect {mono:e}"));
        }
    };
    let record_range = |name: &str, range: f64| {
        if range > 1e-12 {
            failures.borrow_mut().push(format!("{name}: range excess {range:e}"));
        }
    };
    // The seeded restriction trades an O(ds) dip at the first active level
    // for the dead zone, so monotonicity is checked on the plain scheme and
    // the restricted dip is bounded separately.
    let mut dip = 0.0f64;
    for name in ["example1", "example2", "example3"] {
        let (spec, num) = catalog::builtin(name).unwrap();
        let g = build_grid(&spec, num.dx, num.ds, num.s_max).unwrap();
        record(name, &solve_cdf(&spec, &g, &SolveOptions::default(), None).unwrap());
        let (_, wr) = restricted_cdf(&spec, num.dx, num.ds, num.s_max);
        let (range, mono) = check_cdf_field(&wr);
        dip = dip.max(mono / num.ds);
        record_range(name, range);
    }
    let (spec4, num4) = catalog::builtin("example4").unwrap();
    let g4 = build_grid(&spec4, num4.dx, num4.ds, num4.s_max).unwrap();
    let pair = solve_bounds(&spec4, &g4, &SolveOptions::default(), None).unwrap();
    record("example4 lower", &pair.lower);
    record("example4 upper", &pair.upper);
    let (spec5, num5) = catalog::builtin("example5").unwrap();
    let g5 = build_grid(&spec5, num5.dx, num5.ds, num5.s_max).unwrap();
    let plain = ThresholdOptions { restrict: false, ..Default::default() };
    record("example5", &solve_threshold(&spec5, &g5, &plain).unwrap().w);
    let tv5 = solve_threshold(&spec5, &g5, &ThresholdOptions::default()).unwrap();
    let (range, mono) = check_cdf_field(&tv5.w);
    dip = dip.max(mono / num5.ds);
    record_range("example5 restricted", range);
    let spec6 = catalog::example6(16);
    let g6 = build_grid(&spec6, 0.02, 0.02, 0.5).unwrap();
    let opts6 = ThresholdOptions {
        solve: SolveOptions::with_policy(TauPolicy::BoundaryCapped),
        restrict: false,
        ..Default::default()
    };
    record("example6", &solve_threshold(&spec6, &g6, &opts6).unwrap().w);
    let failures = failures.into_inner();
    pass &= dip <= 2.0 && failures.is_empty();
    notes.extend(failures);
    notes.push(format!("restricted first-level dip {dip:.3} ds"));

    let spec1 = catalog::example1();
    let (g1, w1) = restricted_cdf(&spec1, 1e-3, 1e-3, 1.0);
    let last = g1.node_count() - 1;
    let mut mirror = 0.0f64;
    for n in 0..g1.levels() {
        for k in 0..=last {
            mirror = mirror.max((w1.get(n, 0, k) - w1.get(n, 1, last - k)).abs());
        }
    }
    pass &= mirror <= 1e-12;
    notes.push(format!("mirror {mirror:e}"));

    let mut single = catalog::example5();
    single.controls = ControlSet::Finite { controls: vec![vec![-1.0]] };
    let gs = build_grid(&single, 1e-3, 5e-4, 1.0).unwrap();
    let tvs = solve_threshold(&single, &gs, &ThresholdOptions::default()).unwrap();
    let mcs = solve_min_cost(&single, &gs).unwrap();
    let ws = solve_cdf(&single, &gs, &SolveOptions::default(), Some(&mcs)).unwrap();
    let reduction = tvs.w.values().iter().zip(ws.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    pass &= reduction <= 1e-12;
    notes.push(format!("singleton control {reduction:e}"));

    let vals: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&dx| {
            let (g, w) = restricted_cdf(&spec1, dx, dx, 1.0);
            w.get(level_of(&g, 0.5), 0, g.node_at(&[0.7]).unwrap())
        })
        .collect();
    let ratio = (vals[0] - vals[1]).abs() / (vals[1] - vals[2]).abs();
    pass &= ratio >= 1.8;
    notes.push(format!("convergence ratio {ratio:.3} (W = {:.5}, {:.5}, {:.5})", vals[0], vals[1], vals[2]));
    let el = t0.elapsed();
    outcome(pass && within(el, 600), format!("{}; {:.1}s", notes.join("; "), el.as_secs_f64()))
}

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Outcome); 9] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
        (9, criterion9),
    ];
    let mut failed = Vec::new();
    for (id, f) in criteria {
        if !args.is_empty() && !args.contains(&id) {
            continue;
        }
        let o = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        println!("criterion {id}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
