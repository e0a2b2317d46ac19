//! Problem definition: domain, exit set, per-mode fields, rates and controls.

use serde::{Deserialize, Serialize};

use super::rates::{RateMatrix, Rates};
use crate::error::{Error, Result};

/// Axis-aligned box `[lo, hi]` in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn unit(dim: usize) -> Self {
        Domain { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.dim()).all(|a| x[a] >= self.lo[a] - tol && x[a] <= self.hi[a] + tol)
    }

    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        self.contains(x, tol)
            && (0..self.dim()).any(|a| (x[a] - self.lo[a]).abs() <= tol || (x[a] - self.hi[a]).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lo,
    Hi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

/// The exit set Q. Always a subset of the domain boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExitSet {
    Boundary,
    Faces { faces: Vec<Face> },
    Points { points: Vec<Vec<f64>> },
}

impl ExitSet {
    /// Whether the boundary point `y` belongs to Q.
    pub fn contains(&self, domain: &Domain, y: &[f64], tol: f64) -> bool {
        match self {
            ExitSet::Boundary => domain.on_boundary(y, tol),
            ExitSet::Faces { faces } => {
                domain.contains(y, tol)
                    && faces.iter().any(|f| {
                        let edge = match f.side {
                            Side::Lo => domain.lo[f.axis],
                            Side::Hi => domain.hi[f.axis],
                        };
                        (y[f.axis] - edge).abs() <= tol
                    })
            }
            ExitSet::Points { points } => {
                points.iter().any(|p| p.iter().zip(y).all(|(a, b)| (a - b).abs() <= tol))
            }
        }
    }
}

/// Carrier for dynamics, running-cost and exit-cost fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: Vec<f64> },
    /// `f(x, a) = a + offset`.
    ControlOffset { offset: Vec<f64> },
    UnitCost,
    /// Node values on a regular lattice spanning the domain, `components`
    /// values per node, node-major with the first axis fastest.
    Tabulated { shape: Vec<usize>, values: Vec<f64> },
}

impl FieldSpec {
    pub fn constant(v: &[f64]) -> Self {
        FieldSpec::Constant { value: v.to_vec() }
    }

    pub fn scalar(v: f64) -> Self {
        FieldSpec::Constant { value: vec![v] }
    }

    pub fn components(&self) -> usize {
        match self {
            FieldSpec::Constant { value } => value.len(),
            FieldSpec::ControlOffset { offset } => offset.len(),
            FieldSpec::UnitCost => 1,
            FieldSpec::Tabulated { shape, values } => {
                let n: usize = shape.iter().product();
                if n == 0 {
                    0
                } else {
                    values.len() / n
                }
            }
        }
    }

    /// True when the field does not depend on position.
    pub fn is_uniform(&self) -> bool {
        !matches!(self, FieldSpec::Tabulated { .. })
    }

    fn validate(&self, dim: usize, comps: usize, what: &str) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            FieldSpec::Constant { value } if value.len() != comps || !finite(value) => {
                Err(Error::Model(format!("{what}: constant needs {comps} finite components")))
            }
            FieldSpec::ControlOffset { offset } if comps != dim || offset.len() != dim || !finite(offset) => {
                Err(Error::Model(format!("{what}: control offset form only applies to dynamics")))
            }
            FieldSpec::UnitCost if comps != 1 => Err(Error::Model(format!("{what}: unit cost is a scalar field"))),
            FieldSpec::Tabulated { shape, values } => {
                let n: usize = shape.iter().product();
                if shape.len() != dim || shape.iter().any(|&s| s < 2) {
                    return Err(Error::Model(format!("{what}: tabulated shape {shape:?} needs {dim} axes of >= 2 nodes")));
                }
                if values.len() != n * comps || !finite(values) {
                    return Err(Error::Model(format!(
                        "{what}: tabulated field needs {} finite values, got {}",
                        n * comps,
                        values.len()
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Multilinear lookup of a tabulated field; `out` receives every component.
    fn tabulated(shape: &[usize], values: &[f64], domain: &Domain, x: &[f64], out: &mut [f64]) {
        let comps = out.len();
        let dim = shape.len();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..dim {
            let t = ((x[a] - domain.lo[a]) / (domain.hi[a] - domain.lo[a]) * (shape[a] - 1) as f64)
                .clamp(0.0, (shape[a] - 1) as f64);
            let i = (t.floor() as usize).min(shape[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = 0;
            let mut stride = 1;
            for a in 0..dim {
                let up = (corner >> a) & 1;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                idx += (base[a] + up) * stride;
                stride *= shape[a];
            }
            if w == 0.0 {
                continue;
            }
            for c in 0..comps {
                out[c] += w * values[idx * comps + c];
            }
        }
    }

    /// Vector value at `x` under control `a` (unused components are zero).
    pub fn vector(&self, domain: &Domain, x: &[f64], control: Option<[f64; 2]>) -> [f64; 2] {
        let mut out = [0.0; 2];
        let d = domain.dim();
        match self {
            FieldSpec::Constant { value } => out[..d].copy_from_slice(&value[..d]),
            FieldSpec::ControlOffset { offset } => {
                let a = control.unwrap_or([0.0; 2]);
                for k in 0..d {
                    out[k] = a[k] + offset[k];
                }
            }
            FieldSpec::UnitCost => out[0] = 1.0,
            FieldSpec::Tabulated { shape, values } => Self::tabulated(shape, values, domain, x, &mut out[..d]),
        }
        out
    }

    pub fn scalar_at(&self, domain: &Domain, x: &[f64]) -> f64 {
        match self {
            FieldSpec::Constant { value } => value[0],
            FieldSpec::UnitCost => 1.0,
            FieldSpec::ControlOffset { offset } => offset[0],
            FieldSpec::Tabulated { shape, values } => {
                let mut out = [0.0];
                Self::tabulated(shape, values, domain, x, &mut out);
                out[0]
            }
        }
    }

    /// Extremes of a scalar field over the domain (node extremes for tables).
    fn scalar_range(&self) -> (f64, f64) {
        match self {
            FieldSpec::Constant { value } => (value[0], value[0]),
            FieldSpec::UnitCost => (1.0, 1.0),
            FieldSpec::ControlOffset { offset } => (offset[0], offset[0]),
            FieldSpec::Tabulated { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        }
    }

    /// Largest Euclidean norm over the domain and the given controls.
    fn max_norm(&self, dim: usize, controls: &[[f64; 2]]) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        match self {
            FieldSpec::Constant { value } => norm(value),
            FieldSpec::ControlOffset { offset } if controls.is_empty() => norm(offset),
            FieldSpec::ControlOffset { offset } => controls
                .iter()
                .map(|a| norm(&(0..dim).map(|k| a[k] + offset[k]).collect::<Vec<_>>()))
                .fold(0.0, f64::max),
            FieldSpec::UnitCost => 1.0,
            FieldSpec::Tabulated { values, .. } => {
                values.chunks(dim).map(norm).fold(0.0, f64::max)
            }
        }
    }
}

/// Per-mode fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub dynamics: FieldSpec,
    pub running_cost: FieldSpec,
    pub exit_cost: FieldSpec,
}

impl Mode {
    /// Constant velocity, unit running cost, zero exit cost.
    pub fn drift(v: &[f64]) -> Self {
        Mode { dynamics: FieldSpec::constant(v), running_cost: FieldSpec::UnitCost, exit_cost: FieldSpec::scalar(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSet {
    #[default]
    Empty,
    Finite {
        controls: Vec<Vec<f64>>,
    },
    /// `directions` equally spaced unit vectors, the first one along +x.
    UnitCircle {
        directions: usize,
    },
}

impl ControlSet {
    pub fn is_empty(&self) -> bool {
        match self {
            ControlSet::Empty => true,
            ControlSet::Finite { controls } => controls.is_empty(),
            ControlSet::UnitCircle { directions } => *directions == 0,
        }
    }

    pub fn vectors(&self) -> Vec<[f64; 2]> {
        match self {
            ControlSet::Empty => Vec::new(),
            ControlSet::Finite { controls } => controls
                .iter()
                .map(|c| [c.first().copied().unwrap_or(0.0), c.get(1).copied().unwrap_or(0.0)])
                .collect(),
            ControlSet::UnitCircle { directions } => (0..*directions)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / *directions as f64;
                    [th.cos(), th.sin()]
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ControlSet::Empty => 0,
            ControlSet::Finite { controls } => controls.len(),
            ControlSet::UnitCircle { directions } => *directions,
        }
    }
}

/// A full PDMP definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub exit: ExitSet,
    pub modes: Vec<Mode>,
    pub rates: Rates,
    #[serde(default)]
    pub controls: ControlSet,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn is_controlled(&self) -> bool {
        !self.controls.is_empty()
    }

    /// The discrete action list seen by the solvers: the control vectors, or
    /// a single "no control" action.
    pub fn actions(&self) -> Vec<Option<[f64; 2]>> {
        if self.controls.is_empty() {
            vec![None]
        } else {
            self.controls.vectors().into_iter().map(Some).collect()
        }
    }

    pub fn fixed_rates(&self) -> Result<&RateMatrix> {
        match &self.rates {
            Rates::Fixed(r) => Ok(r),
            Rates::Bounded(_) => Err(Error::Precondition("a fixed rate matrix is required".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(1..=2).contains(&d) || self.domain.hi.len() != d {
            return Err(Error::Model(format!("dimension must be 1 or 2 with matching lo/hi, got lo {:?} hi {:?}", self.domain.lo, self.domain.hi)));
        }
        for a in 0..d {
            let (lo, hi) = (self.domain.lo[a], self.domain.hi[a]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Model(format!("domain axis {a}: need finite lo < hi, got [{lo}, {hi}]")));
            }
        }
        if self.modes.is_empty() {
            return Err(Error::Model("at least one mode is required".into()));
        }
        if self.rates.modes() != self.modes.len() {
            return Err(Error::Model(format!(
                "rates are {}x{} but there are {} modes",
                self.rates.modes(),
                self.rates.modes(),
                self.modes.len()
            )));
        }
        let tol = 1e-12 * self.domain.diameter();
        match &self.exit {
            ExitSet::Boundary => {}
            ExitSet::Faces { faces } => {
                if faces.is_empty() || faces.iter().any(|f| f.axis >= d) {
                    return Err(Error::Model("exit faces must be nonempty with valid axes".into()));
                }
            }
            ExitSet::Points { points } => {
                if points.is_empty() {
                    return Err(Error::Model("exit point list is empty".into()));
                }
                for p in points {
                    if p.len() != d || !self.domain.on_boundary(p, tol) {
                        return Err(Error::Model(format!("exit point {p:?} does not lie on the domain boundary")));
                    }
                }
            }
        }
        match &self.controls {
            ControlSet::Finite { controls } => {
                if controls.iter().any(|c| c.len() != d || c.iter().any(|x| !x.is_finite())) {
                    return Err(Error::Model(format!("controls must be finite {d}-vectors")));
                }
            }
            ControlSet::UnitCircle { .. } if d != 2 => {
                return Err(Error::Model("unit-circle controls need a 2D domain".into()));
            }
            _ => {}
        }
        for (i, m) in self.modes.iter().enumerate() {
            m.dynamics.validate(d, d, &format!("mode {} dynamics", i + 1))?;
            m.running_cost.validate(d, 1, &format!("mode {} running cost", i + 1))?;
            m.exit_cost.validate(d, 1, &format!("mode {} exit cost", i + 1))?;
            if matches!(m.dynamics, FieldSpec::UnitCost) {
                return Err(Error::Model(format!("mode {}: unit cost is not a dynamics field", i + 1)));
            }
            if matches!(m.running_cost, FieldSpec::ControlOffset { .. })
                || matches!(m.exit_cost, FieldSpec::ControlOffset { .. })
            {
                return Err(Error::Model(format!("mode {}: control offset form only applies to dynamics", i + 1)));
            }
            if matches!(m.dynamics, FieldSpec::ControlOffset { .. }) && self.controls.is_empty() {
                return Err(Error::Model(format!("mode {}: control-dependent dynamics need a control set", i + 1)));
            }
            let (cmin, _) = m.running_cost.scalar_range();
            if !(cmin > 0.0) {
                return Err(Error::Model(format!("mode {}: running cost must be strictly positive (min {cmin})", i + 1)));
            }
            let (qmin, _) = m.exit_cost.scalar_range();
            if qmin < 0.0 {
                return Err(Error::Model(format!("mode {}: exit cost must be nonnegative (min {qmin})", i + 1)));
            }
        }
        Ok(())
    }

    pub fn min_cost(&self) -> f64 {
        self.modes.iter().map(|m| m.running_cost.scalar_range().0).fold(f64::INFINITY, f64::min)
    }

    pub fn max_cost(&self) -> f64 {
        self.modes.iter().map(|m| m.running_cost.scalar_range().1).fold(0.0, f64::max)
    }

    /// Largest speed `|f|` over space, modes and controls.
    pub fn max_speed(&self) -> f64 {
        let controls = self.controls.vectors();
        self.modes
            .iter()
            .map(|m| m.dynamics.max_norm(self.dim(), &controls))
            .fold(0.0, f64::max)
    }

    /// Largest `ds` for which one uniform `tau` satisfies both step conditions.
    pub fn cfl_max_ds(&self, dx: f64) -> Result<f64> {
        let c = self.min_cost();
        if !(c > 0.0) {
            return Err(Error::Model(format!("minimum running cost {c} must be positive")));
        }
        let v = self.max_speed();
        if v == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(dx * c / v)
    }

    pub fn velocity(&self, mode: usize, x: &[f64], control: Option<[f64; 2]>) -> [f64; 2] {
        self.modes[mode].dynamics.vector(&self.domain, x, control)
    }

    pub fn running_cost(&self, mode: usize, x: &[f64]) -> f64 {
        self.modes[mode].running_cost.scalar_at(&self.domain, x)
    }

    pub fn exit_cost(&self, mode: usize, x: &[f64]) -> f64 {
        self.modes[mode].exit_cost.scalar_at(&self.domain, x)
    }
}
