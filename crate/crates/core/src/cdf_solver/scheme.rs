//! Shared semi-Lagrangian machinery: foot points, stencil evaluation and the
//! mode-coupling step.

use crate::error::Result;
use crate::model::{
    boundary_value, trace, transition_probabilities, CdfField, Foot, Grid, Stencil, ProbabilityMethod, ProblemSpec,
    RateBounds, RateMatrix, TransitionMatrix,
};

/// Which extreme of the rate interval the adversary picks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// How foot values of the different modes are combined over a step.
pub(crate) enum Coupling<'a> {
    Fixed { rates: &'a RateMatrix, method: ProbabilityMethod, full: TransitionMatrix, tau: f64 },
    Bounded { bounds: &'a RateBounds, sense: Sense },
}

impl<'a> Coupling<'a> {
    pub fn fixed(rates: &'a RateMatrix, tau: f64, method: ProbabilityMethod) -> Result<Self> {
        let full = transition_probabilities(rates, tau, method)?;
        Ok(Coupling::Fixed { rates, method, full, tau })
    }

    /// `sum_j p_ij(dt) vals[j]`, or its adversarial version.
    #[inline]
    pub fn apply(&self, i: usize, dt: f64, vals: &[f64]) -> f64 {
        match self {
            Coupling::Fixed { rates, method, full, tau } => {
                if dt == *tau {
                    full.row(i).iter().zip(vals).map(|(p, v)| p * v).sum()
                } else {
                    match method {
                        ProbabilityMethod::FirstOrder => {
                            let m = rates.modes();
                            let mut acc = (1.0 - rates.exit_rate(i) * dt) * vals[i];
                            for j in 0..m {
                                if j != i {
                                    acc += rates.rate(i, j) * dt * vals[j];
                                }
                            }
                            acc
                        }
                        ProbabilityMethod::Exact => {
                            let p = transition_probabilities(rates, dt, *method).expect("validated rates");
                            p.row(i).iter().zip(vals).map(|(p, v)| p * v).sum()
                        }
                    }
                }
            }
            Coupling::Bounded { bounds, sense } => {
                let m = bounds.modes();
                let mut acc = vals[i];
                for j in 0..m {
                    if j == i {
                        continue;
                    }
                    let d = vals[j] - vals[i];
                    acc += dt * crate::bounds::optimal_rate(d, bounds.lower(i, j), bounds.upper(i, j), *sense) * d;
                }
                acc
            }
        }
    }
}

/// Per-problem data reused by every level of a sweep.
pub(crate) struct Scheme<'a> {
    pub spec: &'a ProblemSpec,
    pub grid: &'a Grid,
    pub tau: f64,
    pub actions: Vec<Option<[f64; 2]>>,
    /// Running cost `[mode][node]`.
    pub cost: Vec<f64>,
    /// Velocities `[mode][action]` when every dynamics field is uniform.
    uniform_velocity: Option<Vec<[f64; 2]>>,
}

impl<'a> Scheme<'a> {
    pub fn new(spec: &'a ProblemSpec, grid: &'a Grid, tau: f64) -> Self {
        let actions = spec.actions();
        let nodes = grid.node_count();
        let m = spec.mode_count();
        let mut cost = vec![0.0; m * nodes];
        for i in 0..m {
            for k in 0..nodes {
                cost[i * nodes + k] = spec.running_cost(i, &grid.coords(k)[..grid.dim()]);
            }
        }
        let uniform_velocity = if spec.modes.iter().all(|md| md.dynamics.is_uniform()) {
            let origin = grid.coords(0);
            Some(
                (0..m)
                    .flat_map(|i| actions.iter().map(move |a| (i, *a)))
                    .map(|(i, a)| spec.velocity(i, &origin[..grid.dim()], a))
                    .collect(),
            )
        } else {
            None
        };
        Scheme { spec, grid, tau, actions, cost, uniform_velocity }
    }

    pub fn modes(&self) -> usize {
        self.spec.mode_count()
    }

    #[inline]
    pub fn cost(&self, mode: usize, k: usize) -> f64 {
        self.cost[mode * self.grid.node_count() + k]
    }

    #[inline]
    pub fn velocity(&self, mode: usize, k: usize, action: usize) -> [f64; 2] {
        match &self.uniform_velocity {
            Some(v) => v[mode * self.actions.len() + action],
            None => {
                let x = self.grid.coords(k);
                self.spec.velocity(mode, &x[..self.grid.dim()], self.actions[action])
            }
        }
    }

    #[inline]
    pub fn foot(&self, mode: usize, k: usize, action: usize, tau: f64) -> Foot {
        trace(self.grid, k, self.velocity(mode, k, action), tau)
    }

    /// Resolves a foot into an interpolation stencil or exit costs.
    pub fn prepare(&self, foot: Foot) -> Prepared {
        match foot {
            Foot::Inside { t, dt } => Prepared::Inside { st: self.grid.stencil(t), dt },
            Foot::Exit { y, dt } => Prepared::Exit {
                q: (0..self.modes()).map(|j| self.spec.exit_cost(j, &y[..self.grid.dim()])).collect(),
                dt,
            },
            Foot::Escape => Prepared::Escape,
        }
    }

    /// Fills `out[j]` with the value of every mode `j` of `data` at the foot,
    /// at fractional level `ts`; `data` holds the levels below `limit`.
    #[inline]
    pub fn values(&self, foot: &Prepared, ts: f64, data: &[f64], limit: usize, out: &mut [f64]) {
        let m = self.modes();
        match foot {
            Prepared::Inside { st, .. } => {
                for (j, o) in out.iter_mut().enumerate().take(m) {
                    *o = CdfField::stencil_value(self.grid, data, m, limit, st, j, ts);
                }
            }
            Prepared::Exit { q, .. } => {
                let ds = self.grid.ds();
                for (o, &qj) in out.iter_mut().zip(q) {
                    *o = boundary_value(qj, ts * ds, ds);
                }
            }
            Prepared::Escape => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }
}

/// A foot point ready for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) enum Prepared {
    Inside { st: Stencil, dt: f64 },
    Exit { q: Vec<f64>, dt: f64 },
    Escape,
}

impl Prepared {
    #[inline]
    pub fn dt(&self) -> f64 {
        match self {
            Prepared::Inside { dt, .. } | Prepared::Exit { dt, .. } => *dt,
            Prepared::Escape => 0.0,
        }
    }
}
