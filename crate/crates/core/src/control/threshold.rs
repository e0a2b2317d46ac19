//! Threshold-optimal success probability on the cost-augmented state space.

use rayon::prelude::*;

use super::hjb::solve_hjb_expectation;
use super::policy::{inherit_exit_actions, Policy, PolicyKind};
use crate::cdf_solver::scheme::{Coupling, Prepared, Scheme};
use crate::cdf_solver::{prepare_feet, restrict_domain, solve_min_cost, sweep, MinCostField, SolveOptions, ValueField};
use crate::error::{Error, Result};
use crate::model::{boundary_value, CdfField, FieldKind, Grid, ProblemSpec, SNAP};

/// Probabilities within this of the maximum count as ties.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    pub solve: SolveOptions,
    /// Start each node at `s0` seeded with `w0`.
    pub restrict: bool,
    pub hjb_tol: f64,
    pub hjb_max_iter: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions { solve: SolveOptions::default(), restrict: true, hjb_tol: 1e-10, hjb_max_iter: 200_000 }
    }
}

/// `W` (optimal success probability), the tie-breaking expectation `V` and
/// the chosen action, all laid out `[level][mode][node]`.
#[derive(Debug, Clone)]
pub struct ThresholdValue {
    pub w: CdfField,
    v: Vec<f64>,
    actions: Vec<u16>,
    pub expectation: ValueField,
    pub min_cost: Option<MinCostField>,
    nodes: usize,
    modes: usize,
}

impl ThresholdValue {
    fn idx(&self, n: usize, mode: usize, k: usize) -> usize {
        (n * self.modes + mode) * self.nodes + k
    }

    pub fn v(&self, n: usize, mode: usize, k: usize) -> f64 {
        self.v[self.idx(n, mode, k)]
    }

    pub fn action(&self, n: usize, mode: usize, k: usize) -> usize {
        self.actions[self.idx(n, mode, k)] as usize
    }

    /// `W = 0` in every mode.
    pub fn hopeless(&self, n: usize, k: usize) -> bool {
        (0..self.modes).all(|i| self.w.get(n, i, k) == 0.0)
    }

    /// `W = 1` in every mode.
    pub fn unconditional(&self, n: usize, k: usize) -> bool {
        (0..self.modes).all(|i| self.w.get(n, i, k) == 1.0)
    }
}

#[inline]
fn snap_level(ts: f64) -> f64 {
    let r = ts.round();
    if (ts - r).abs() <= SNAP {
        r
    } else {
        ts
    }
}

/// Expected cost `V_j` at a foot: `u` below `s = 0`, level interpolation
/// otherwise.
#[inline]
fn v_at(scheme: &Scheme, foot: &Prepared, ts: f64, v_below: &[f64], u: &ValueField, limit: usize, out: &mut [f64]) {
    let nodes = scheme.grid.node_count();
    let m = scheme.modes();
    match foot {
        Prepared::Inside { st, .. } => {
            let t = snap_level(ts);
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for c in 0..st.len {
                    let k = st.nodes[c];
                    let val = if t < 0.0 {
                        u.get(j, k)
                    } else {
                        let top = (limit - 1) as f64;
                        if t >= top {
                            v_below[((limit - 1) * m + j) * nodes + k]
                        } else {
                            let n0 = t.floor() as usize;
                            let f = t - n0 as f64;
                            let a = v_below[(n0 * m + j) * nodes + k];
                            if f == 0.0 {
                                a
                            } else {
                                (1.0 - f) * a + f * v_below[((n0 + 1) * m + j) * nodes + k]
                            }
                        }
                    };
                    acc += st.weights[c] * val;
                }
                *o = acc;
            }
        }
        Prepared::Exit { q, .. } => out.copy_from_slice(q),
        Prepared::Escape => out.iter_mut().for_each(|o| *o = f64::INFINITY),
    }
}

/// Upward sweep maximizing the probability of exiting within budget `s`, with
/// ties broken by the smallest expected cost and then the lowest index.
pub fn solve_threshold(spec: &ProblemSpec, grid: &Grid, opts: &ThresholdOptions) -> Result<ThresholdValue> {
    if !spec.is_controlled() {
        return Err(Error::Precondition("solve_threshold needs a non-empty control set".into()));
    }
    let rates = spec.fixed_rates()?;
    let tau = opts.solve.resolve_tau(spec, grid)?;
    let (u, _) = solve_hjb_expectation(spec, grid, opts.hjb_tol, opts.hjb_max_iter)?;
    let min_cost = if opts.restrict { Some(solve_min_cost(spec, grid)?) } else { None };
    let restriction = min_cost.as_ref().map(|mc| restrict_domain(mc, grid));
    let scheme = Scheme::new(spec, grid, tau);
    let coupling = Coupling::fixed(rates, tau, opts.solve.method)?;
    let nodes = grid.node_count();
    let m = spec.mode_count();
    let na = scheme.actions.len();
    let levels = grid.levels();
    let ds = grid.ds();
    let mut w = CdfField::zeros(grid, tau, FieldKind::Threshold);
    let mut v = vec![0.0; levels * m * nodes];
    let mut actions = vec![0u16; levels * m * nodes];
    let stride = m * nodes;
    for n in 0..levels {
        let s = grid.s(n);
        let (w_below, w_cur) = w.split_at_level(n);
        let (v_below, v_rest) = v.split_at_mut(n * stride);
        let v_cur = &mut v_rest[..stride];
        let a_cur = &mut actions[n * stride..(n + 1) * stride];
        w_cur
            .par_chunks_mut(nodes)
            .zip(v_cur.par_chunks_mut(nodes))
            .zip(a_cur.par_chunks_mut(nodes))
            .enumerate()
            .for_each(|(i, ((w_row, v_row), a_row))| {
                let mut wv = vec![0.0; m];
                let mut vv = vec![0.0; m];
                let mut cand_w = vec![0.0; na];
                let mut cand_v = vec![0.0; na];
                for k in 0..nodes {
                    if grid.is_exit(k) {
                        w_row[k] = boundary_value(grid.exit_cost(i, k), s, ds);
                        v_row[k] = grid.exit_cost(i, k);
                        a_row[k] = u.actions[i * nodes + k];
                        continue;
                    }
                    let n0 = restriction.as_ref().map_or(1, |r| r.first_level[k].max(1));
                    if n < n0 {
                        w_row[k] = 0.0;
                        v_row[k] = u.get(i, k);
                        a_row[k] = u.actions[i * nodes + k];
                        continue;
                    }
                    for a in 0..na {
                        let foot = scheme.prepare(scheme.foot(i, k, a, tau));
                        if let Prepared::Escape = foot {
                            cand_w[a] = 0.0;
                            cand_v[a] = f64::INFINITY;
                            continue;
                        }
                        let dt = foot.dt();
                        let c = scheme.cost(i, k);
                        let ts = n as f64 - dt * c / ds;
                        scheme.values(&foot, ts, w_below, n, &mut wv);
                        cand_w[a] = coupling.apply(i, dt, &wv);
                        v_at(&scheme, &foot, ts, v_below, &u, n, &mut vv);
                        cand_v[a] = if vv.iter().all(|x| x.is_finite()) {
                            dt * c + coupling.apply(i, dt, &vv)
                        } else {
                            f64::INFINITY
                        };
                    }
                    let best_w = cand_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut pick = usize::MAX;
                    for a in 0..na {
                        if cand_w[a] >= best_w - TIE_TOL && (pick == usize::MAX || cand_v[a] < cand_v[pick]) {
                            pick = a;
                        }
                    }
                    w_row[k] = best_w;
                    v_row[k] = cand_v[pick];
                    a_row[k] = pick as u16;
                    if let Some(r) = &restriction {
                        if n == r.first_level[k] {
                            w_row[k] = r.seed[i * nodes + k];
                        }
                    }
                }
            });
        // Hopeless nodes follow the expectation-optimal policy.
        let w_cur = w.level(n).to_vec();
        let v_cur = &mut v[n * stride..(n + 1) * stride];
        let a_cur = &mut actions[n * stride..(n + 1) * stride];
        for k in (0..nodes).filter(|&k| !grid.is_exit(k)) {
            if (0..m).all(|i| w_cur[i * nodes + k] == 0.0) {
                for i in 0..m {
                    v_cur[i * nodes + k] = u.get(i, k);
                    a_cur[i * nodes + k] = u.actions[i * nodes + k];
                }
            }
        }
    }
    Ok(ThresholdValue { w, v, actions, expectation: u, min_cost, nodes, modes: m })
}

/// Packages the tie-broken argmax actions as a threshold policy whose
/// fallback is the expectation-optimal action.
pub fn synthesize_policy(tv: &ThresholdValue, spec: &ProblemSpec, grid: &Grid) -> Result<Policy> {
    if tv.nodes != grid.node_count() || tv.modes != spec.mode_count() || tv.w.levels() != grid.levels() {
        return Err(Error::Precondition("threshold value was computed on a different grid".into()));
    }
    let mut actions = tv.actions.clone();
    let mut fallback = tv.expectation.actions.clone();
    inherit_exit_actions(grid, &mut actions);
    inherit_exit_actions(grid, &mut fallback);
    Policy::new(PolicyKind::Threshold, grid.descriptor(), spec.controls.clone(), spec.mode_count(), actions, fallback)
}

/// CDF of the cost under a fixed s-independent policy.
pub fn evaluate_policy_cdf(policy: &Policy, spec: &ProblemSpec, grid: &Grid, opts: &SolveOptions) -> Result<CdfField> {
    if !policy.is_s_independent() {
        return Err(Error::Precondition(
            "evaluate_policy_cdf needs an s-independent policy; simulate threshold policies instead".into(),
        ));
    }
    let d = grid.descriptor();
    if policy.grid.nodes != d.nodes || policy.modes() != spec.mode_count() || policy.controls != spec.controls {
        return Err(Error::Precondition("policy was built for a different grid or control set".into()));
    }
    let rates = spec.fixed_rates()?;
    let tau = opts.resolve_tau(spec, grid)?;
    let scheme = Scheme::new(spec, grid, tau);
    let coupling = Coupling::fixed(rates, tau, opts.method)?;
    let feet = prepare_feet(&scheme, &|i, k| policy.action(0, i, k));
    Ok(sweep(&scheme, &coupling, &feet, None, FieldKind::PolicyCdf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::cdf_solver::solve_cdf;
    use crate::model::{build_grid, ControlSet, RateMatrix, Rates};

    #[test]
    fn singleton_control_matches_plain_cdf() {
        let mut spec = catalog::example5();
        spec.controls = ControlSet::Finite { controls: vec![vec![1.0]] };
        let g = build_grid(&spec, 0.01, 0.005, 1.0).unwrap();
        for restrict in [false, true] {
            let opts = ThresholdOptions { restrict, ..Default::default() };
            let tv = solve_threshold(&spec, &g, &opts).unwrap();
            let mc = restrict.then(|| solve_min_cost(&spec, &g).unwrap());
            let w = solve_cdf(&spec, &g, &SolveOptions::default(), mc.as_ref()).unwrap();
            let d = tv.w.values().iter().zip(w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-12, "restrict = {restrict}: {d}");
        }
    }

    #[test]
    fn hopeless_below_best_case_cost() {
        let spec = catalog::example5();
        let g = build_grid(&spec, 0.01, 0.005, 1.0).unwrap();
        let tv = solve_threshold(&spec, &g, &ThresholdOptions::default()).unwrap();
        let mc = tv.min_cost.as_ref().unwrap();
        for k in 0..g.node_count() {
            let x = g.coords(k)[0];
            assert!((mc.s0(k).unwrap() - x.min(1.0 - x) / 1.5).abs() < 1e-12);
            for n in 0..g.levels() {
                if g.s(n) < mc.s0(k).unwrap() - 1e-12 {
                    assert!(tv.hopeless(n, k));
                    for i in 0..2 {
                        assert_eq!(tv.action(n, i, k), tv.expectation.action(i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn dominates_expectation_policy() {
        let spec = catalog::example5();
        let g = build_grid(&spec, 0.01, 0.005, 1.0).unwrap();
        let opts = ThresholdOptions { restrict: false, ..Default::default() };
        let tv = solve_threshold(&spec, &g, &opts).unwrap();
        let lift = synthesize_policy(&tv, &spec, &g).unwrap().expectation_lift();
        let pc = evaluate_policy_cdf(&lift, &spec, &g, &SolveOptions::default()).unwrap();
        let worst = tv.w.values().iter().zip(pc.values()).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn deterministic_limit_is_an_indicator() {
        let mut spec = catalog::example5();
        spec.rates = Rates::Fixed(RateMatrix::uniform(2, 0.0).unwrap());
        let g = build_grid(&spec, 0.01, 0.005, 1.0).unwrap();
        let tv = solve_threshold(&spec, &g, &ThresholdOptions::default()).unwrap();
        for k in (0..g.node_count()).filter(|&k| !g.is_exit(k)) {
            let x = g.coords(k)[0];
            let t = (x / 0.5).min((1.0 - x) / 1.5);
            for n in 0..g.levels() {
                if g.s(n) < x.min(1.0 - x) / 1.5 - 1e-9 {
                    assert_eq!(tv.w.get(n, 0, k), 0.0);
                }
            }
            // The smeared step crosses one half near the exact exit time.
            let half = (0..g.levels()).find(|&n| tv.w.get(n, 0, k) >= 0.5).unwrap();
            assert!((g.s(half) - t).abs() <= 0.02, "x = {x}: {} vs {t}", g.s(half));
        }
    }

    #[test]
    fn rejects_threshold_policy_for_evaluation() {
        let spec = catalog::example5();
        let g = build_grid(&spec, 0.05, 0.025, 1.0).unwrap();
        let tv = solve_threshold(&spec, &g, &ThresholdOptions::default()).unwrap();
        let p = synthesize_policy(&tv, &spec, &g).unwrap();
        assert!(evaluate_policy_cdf(&p, &spec, &g, &SolveOptions::default()).is_err());
    }
}
