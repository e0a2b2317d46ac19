//! Monte-Carlo simulation of PDMP trajectories and empirical CDFs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{Policy, PolicyKind};
use crate::error::{Error, Result};
use crate::model::{ProblemSpec, SNAP};

/// One simulated path from `(x, mode)` until exit, escape or the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub index: u64,
    pub start: Vec<f64>,
    pub start_mode: usize,
    pub switch_times: Vec<f64>,
    /// Modes visited, starting with `start_mode`.
    pub modes: Vec<usize>,
    pub exit_time: Option<f64>,
    /// Cumulative cost including the exit cost; `+inf` unless the path exited.
    pub cost: f64,
    pub exit_point: Option<Vec<f64>>,
    /// Left the domain away from the exit set.
    pub escaped: bool,
    /// Hit the horizon cap.
    pub censored: bool,
    /// `(t, c(t))` at every event, recorded for threshold-aware policies.
    pub checkpoints: Vec<(f64, f64)>,
}

impl TrajectorySample {
    pub fn exited(&self) -> bool {
        self.exit_time.is_some()
    }

    pub fn switch_count(&self) -> usize {
        self.switch_times.len()
    }
}

/// Samples paths of one problem, optionally under a feedback policy.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    spec: &'a ProblemSpec,
    policy: Option<&'a Policy>,
    threshold: Option<f64>,
    horizon: f64,
    seed: u64,
    actions: Vec<Option<[f64; 2]>>,
    /// Step for non-uniform dynamics and the probe length scale.
    dx: f64,
}

/// `50 * diameter / min speed`, or `+inf` if some mode never moves.
pub fn default_horizon(spec: &ProblemSpec) -> f64 {
    let dim = spec.dim();
    let mut min_speed = f64::INFINITY;
    let corners: Vec<Vec<f64>> = (0..(1usize << dim))
        .map(|c| (0..dim).map(|a| if (c >> a) & 1 == 1 { spec.domain.hi[a] } else { spec.domain.lo[a] }).collect())
        .collect();
    for i in 0..spec.mode_count() {
        for a in spec.actions() {
            for x in &corners {
                let v = spec.velocity(i, x, a);
                min_speed = min_speed.min((v[0] * v[0] + v[1] * v[1]).sqrt());
            }
        }
    }
    if min_speed > 0.0 {
        50.0 * spec.domain.diameter() / min_speed
    } else {
        f64::INFINITY
    }
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a ProblemSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        spec.fixed_rates()?;
        let dx = spec.domain.diameter() * 1e-3;
        Ok(Simulator {
            spec,
            policy: None,
            threshold: None,
            horizon: default_horizon(spec).min(1e6),
            seed,
            actions: spec.actions(),
            dx,
        })
    }

    /// Uses `policy`; threshold policies need the budget `threshold`.
    pub fn with_policy(mut self, policy: &'a Policy, threshold: Option<f64>) -> Result<Self> {
        if policy.controls != self.spec.controls || policy.modes() != self.spec.mode_count() {
            return Err(Error::Precondition("policy does not match the problem's modes and controls".into()));
        }
        if policy.grid.nodes.len() != self.spec.dim() {
            return Err(Error::Precondition("policy grid dimension differs from the problem".into()));
        }
        if policy.kind == PolicyKind::Threshold && threshold.is_none() {
            return Err(Error::Precondition("a threshold policy needs a threshold".into()));
        }
        self.dx = policy.grid.dx;
        self.policy = Some(policy);
        self.threshold = threshold;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Precondition(format!("horizon cap {horizon} must be positive")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn lookup(&self, mode: usize, x: &[f64], c: f64) -> usize {
        match self.policy {
            Some(p) => p.lookup(mode, x, self.threshold.map(|t| t - c)),
            None => 0,
        }
    }

    /// Action for the segment starting at `(x, c)`, looked up a short way
    /// along the motion so boundary points resolve to the cell being entered.
    fn choose_action(&self, mode: usize, x: &[f64], c: f64) -> usize {
        let dim = self.spec.dim();
        let a1 = self.lookup(mode, x, c);
        if self.policy.is_none() {
            return a1;
        }
        let probe = |a: usize| {
            let v = self.spec.velocity(mode, x, self.actions[a]);
            let speed = v[0].abs().max(v[1].abs());
            let eps = if speed > 0.0 { 1e-6 * self.dx / speed } else { 0.0 };
            let cost = self.spec.running_cost(mode, x);
            let y: Vec<f64> = (0..dim).map(|d| x[d] + eps * v[d]).collect();
            self.lookup(mode, &y, c + eps * cost)
        };
        let a2 = probe(a1);
        if a2 == a1 || probe(a2) != a2 {
            a1
        } else {
            a2
        }
    }

    /// Time until the policy's cell or level could change along a straight segment.
    fn time_to_lookup_change(&self, x: &[f64], v: [f64; 2], c: f64, cost: f64) -> f64 {
        let Some(p) = self.policy else {
            return f64::INFINITY;
        };
        let g = &p.grid;
        let mut t = f64::INFINITY;
        for (d, &xd) in x.iter().enumerate() {
            if v[d] == 0.0 {
                continue;
            }
            let eps = 1e-6 * v[d].signum();
            let ti = (xd - g.lo[d]) / g.dx + eps;
            let cell = ti.floor();
            let target = if v[d] > 0.0 { cell + 1.0 } else { cell };
            t = t.min(((g.lo[d] + target * g.dx - xd) / v[d]).max(0.0));
        }
        if let (PolicyKind::Threshold, Some(thr)) = (p.kind, self.threshold) {
            // The level in use is the one just below the remaining budget;
            // it changes when the budget drops past its lower edge.
            let r = (thr - c) / g.ds - 1e-6;
            if r >= 0.0 && cost > 0.0 {
                let edge = r.floor() * g.ds;
                t = t.min(((thr - c - edge) / cost).max(0.0));
            }
        }
        t
    }

    /// Time to leave the domain along `v` from `x`.
    fn time_to_boundary(&self, x: &[f64], v: [f64; 2]) -> f64 {
        let mut t = f64::INFINITY;
        for (d, &xd) in x.iter().enumerate() {
            if v[d] > 0.0 {
                t = t.min(((self.spec.domain.hi[d] - xd) / v[d]).max(0.0));
            } else if v[d] < 0.0 {
                t = t.min(((self.spec.domain.lo[d] - xd) / v[d]).max(0.0));
            }
        }
        t
    }

    /// Draws one trajectory; identical `(seed, index)` give identical paths.
    pub fn sample(&self, start: &[f64], mode: usize, index: u64) -> TrajectorySample {
        let spec = self.spec;
        let dim = spec.dim();
        let rates = spec.fixed_rates().expect("checked in new");
        let mut rng = self.rng(index);
        let mut x: Vec<f64> = start[..dim].to_vec();
        let mut i = mode;
        let mut t = 0.0;
        let mut c = 0.0;
        let mut out = TrajectorySample {
            index,
            start: x.clone(),
            start_mode: mode,
            switch_times: Vec::new(),
            modes: vec![mode],
            exit_time: None,
            cost: f64::INFINITY,
            exit_point: None,
            escaped: false,
            censored: false,
            checkpoints: Vec::new(),
        };
        let record = self.threshold.is_some();
        let tol = SNAP * self.dx;
        let draw_switch = |rng: &mut ChaCha8Rng, i: usize, t: f64| {
            let rate = rates.exit_rate(i);
            if rate > 0.0 {
                t + Exp::new(rate).expect("positive rate").sample(rng)
            } else {
                f64::INFINITY
            }
        };
        let mut t_switch = draw_switch(&mut rng, i, t);
        if spec.exit.contains(&spec.domain, &x, tol) {
            out.exit_time = Some(0.0);
            out.cost = spec.exit_cost(i, &x);
            out.exit_point = Some(x);
            return out;
        }
        let uniform: Vec<bool> =
            spec.modes.iter().map(|m| m.dynamics.is_uniform() && m.running_cost.is_uniform()).collect();
        loop {
            if record {
                out.checkpoints.push((t, c));
            }
            if t >= self.horizon {
                out.censored = true;
                return out;
            }
            let a = self.choose_action(i, &x, c);
            let control = self.actions[a];
            let until_switch = t_switch - t;
            let until_horizon = self.horizon - t;
            let mut hit_boundary = false;
            let dt;
            if uniform[i] {
                let v = spec.velocity(i, &x, control);
                let cost = spec.running_cost(i, &x);
                let tb = self.time_to_boundary(&x, v);
                let tl = self.time_to_lookup_change(&x, v, c, cost);
                dt = until_switch.min(until_horizon).min(tb).min(tl);
                hit_boundary = tb <= dt;
                for d in 0..dim {
                    x[d] += dt * v[d];
                }
                c += dt * cost;
            } else {
                let v0 = spec.velocity(i, &x, control);
                let speed = v0[0].abs().max(v0[1].abs()).max(1e-12);
                let tl = self.time_to_lookup_change(&x, v0, c, spec.running_cost(i, &x));
                let h = (self.dx / speed).min(until_switch).min(until_horizon).min(tl.max(self.dx * 1e-3 / speed));
                let (nx, dc) = self.rk4(i, &x, control, h);
                let inside = spec.domain.contains(&nx, 0.0);
                if inside {
                    dt = h;
                    x = nx;
                    c += dc;
                } else {
                    let theta = (0..dim)
                        .filter_map(|d| {
                            let step = nx[d] - x[d];
                            if nx[d] > spec.domain.hi[d] {
                                Some((spec.domain.hi[d] - x[d]) / step)
                            } else if nx[d] < spec.domain.lo[d] {
                                Some((spec.domain.lo[d] - x[d]) / step)
                            } else {
                                None
                            }
                        })
                        .fold(1.0f64, f64::min)
                        .clamp(0.0, 1.0);
                    dt = theta * h;
                    for d in 0..dim {
                        x[d] += theta * (nx[d] - x[d]);
                    }
                    c += theta * dc;
                    hit_boundary = true;
                }
            }
            t += dt;
            // A cell or level event can stop a hair short of an exit face.
            hit_boundary |= spec.exit.contains(&spec.domain, &x, tol);
            if hit_boundary {
                for d in 0..dim {
                    x[d] = x[d].clamp(spec.domain.lo[d], spec.domain.hi[d]);
                }
                if spec.exit.contains(&spec.domain, &x, tol) {
                    if record {
                        out.checkpoints.push((t, c));
                    }
                    out.exit_time = Some(t);
                    out.cost = c + spec.exit_cost(i, &x);
                    out.exit_point = Some(x);
                } else {
                    out.escaped = true;
                }
                return out;
            }
            if t >= t_switch {
                let total = rates.exit_rate(i);
                let mut u = rng.random::<f64>() * total;
                let mut next = i;
                for j in 0..spec.mode_count() {
                    if j == i {
                        continue;
                    }
                    next = j;
                    u -= rates.rate(i, j);
                    if u < 0.0 {
                        break;
                    }
                }
                i = next;
                t = t_switch;
                out.switch_times.push(t);
                out.modes.push(i);
                t_switch = draw_switch(&mut rng, i, t);
            }
        }
    }

    /// Classical RK4 for position and accumulated cost with a frozen control.
    fn rk4(&self, mode: usize, x: &[f64], control: Option<[f64; 2]>, h: f64) -> (Vec<f64>, f64) {
        let dim = x.len();
        let f = |p: &[f64]| {
            let q: Vec<f64> = (0..dim).map(|d| p[d].clamp(self.spec.domain.lo[d], self.spec.domain.hi[d])).collect();
            (self.spec.velocity(mode, &q, control), self.spec.running_cost(mode, &q))
        };
        let shift = |p: &[f64], v: [f64; 2], s: f64| -> Vec<f64> { (0..dim).map(|d| p[d] + s * v[d]).collect() };
        let (k1, c1) = f(x);
        let (k2, c2) = f(&shift(x, k1, h / 2.0));
        let (k3, c3) = f(&shift(x, k2, h / 2.0));
        let (k4, c4) = f(&shift(x, k3, h));
        let nx = (0..dim).map(|d| x[d] + h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])).collect();
        (nx, h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4))
    }

    /// Samples `0..n` in parallel; the result is independent of thread count.
    pub fn run(&self, start: &[f64], mode: usize, n: usize) -> Vec<TrajectorySample> {
        (0..n as u64).into_par_iter().map(|k| self.sample(start, mode, k)).collect()
    }
}

/// Convenience wrapper for a single trajectory.
pub fn sample_trajectory(
    spec: &ProblemSpec,
    start: &[f64],
    mode: usize,
    policy: Option<&Policy>,
    threshold: Option<f64>,
    seed: u64,
    index: u64,
    horizon_cap: Option<f64>,
) -> Result<TrajectorySample> {
    let mut sim = Simulator::new(spec, seed)?;
    if let Some(p) = policy {
        sim = sim.with_policy(p, threshold)?;
    } else if spec.controls.len() > 1 {
        return Err(Error::Precondition("a controlled problem needs a policy to simulate".into()));
    }
    if let Some(h) = horizon_cap {
        sim = sim.with_horizon(h)?;
    }
    Ok(sim.sample(start, mode, index))
}

/// Right-continuous empirical CDF; non-exited samples count as `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    n: usize,
    pub seed: Option<u64>,
}

impl EmpiricalCdf {
    pub fn from_costs(costs: &[f64]) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::Empty("empirical CDF of no samples".into()));
        }
        let mut sorted: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted, n: costs.len(), seed: None })
    }

    pub fn from_samples(samples: &[TrajectorySample]) -> Result<Self> {
        let costs: Vec<f64> = samples.iter().map(|s| s.cost).collect();
        Self::from_costs(&costs)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn censored(&self) -> usize {
        self.n - self.sorted.len()
    }

    /// `P(J <= s)`, with a `1e-9` allowance for rounding in the costs.
    pub fn eval(&self, s: f64) -> f64 {
        let lim = s + 1e-9;
        self.sorted.partition_point(|&c| c <= lim) as f64 / self.n as f64
    }

    /// Half-width of the DKW band at confidence `1 - alpha`.
    pub fn dkw_epsilon(&self, alpha: f64) -> f64 {
        dkw_epsilon(self.n, alpha)
    }

    /// Largest `|F(s) - g(s)|` over the given abscissae.
    pub fn sup_distance(&self, s: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        s.iter().map(|&x| (self.eval(x) - g(x)).abs()).fold(0.0, f64::max)
    }
}

pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sample mean of the cost and its standard error.
pub fn estimate_mean(samples: &[TrajectorySample]) -> Result<(f64, f64)> {
    let costs: Vec<f64> = samples.iter().map(|s| s.cost).collect();
    mean_and_se(&costs)
}

pub fn mean_and_se(costs: &[f64]) -> Result<(f64, f64)> {
    if costs.is_empty() {
        return Err(Error::Empty("mean of no samples".into()));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Precondition("censored or escaped samples have no finite cost".into()));
    }
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    if costs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Fraction of `[0, horizon]` spent in each mode by the switching process alone.
pub fn mode_occupancy(spec: &ProblemSpec, mode: usize, horizon: f64, seed: u64, index: u64) -> Result<Vec<f64>> {
    let rates = spec.fixed_rates()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let m = spec.mode_count();
    let mut time = vec![0.0; m];
    let (mut t, mut i) = (0.0, mode);
    while t < horizon {
        let rate = rates.exit_rate(i);
        let hold = if rate > 0.0 { Exp::new(rate).expect("positive rate").sample(&mut rng) } else { f64::INFINITY };
        let end = (t + hold).min(horizon);
        time[i] += end - t;
        t = end;
        if t >= horizon {
            break;
        }
        let mut u = rng.random::<f64>() * rate;
        for j in (0..m).filter(|&j| j != i) {
            u -= rates.rate(i, j);
            if u < 0.0 {
                i = j;
                break;
            }
        }
    }
    Ok(time.into_iter().map(|x| x / horizon).collect())
}
