//! Switching-rate matrices, interval bounds on them, and the transition
//! probabilities they induce over a pseudo-timestep.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Generator of the mode-switching chain. Off-diagonals are rates, the
/// diagonal is minus the row sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RateMatrix {
    m: usize,
    data: Vec<f64>,
}

impl RateMatrix {
    /// Builds a generator from a square matrix. Diagonal entries may be
    /// given as zero or as minus the row sum; anything else is rejected.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Model("rate matrix has no rows".into()));
        }
        let mut data = vec![0.0; m * m];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Model(format!(
                    "rate matrix row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Model(format!("rate[{i}][{j}] = {v} is not a finite nonnegative rate")));
                }
                data[i * m + j] = v;
                sum += v;
            }
            let d = row[i];
            if d != 0.0 && (d + sum).abs() > ROW_TOL * sum.max(1.0) {
                return Err(Error::Model(format!(
                    "rate[{i}][{i}] = {d} does not equal minus the off-diagonal row sum {sum}"
                )));
            }
            data[i * m + i] = -sum;
        }
        Ok(RateMatrix { m, data })
    }

    /// All off-diagonal rates equal to `lambda`.
    pub fn uniform(m: usize, lambda: f64) -> Result<Self> {
        let rows = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { lambda }).collect())
            .collect();
        RateMatrix::new(rows)
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    /// Total rate of leaving mode `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.data[i * self.m + i]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.m).map(|i| self.exit_rate(i)).fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.m).map(|r| r.to_vec()).collect()
    }

    /// Stationary distribution of the chain (assumes it is unique).
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let m = self.m;
        // pi Λ = 0 with sum(pi) = 1: replace the last equation by the normalization.
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                a[(j, i)] = self.rate(i, j);
            }
        }
        for i in 0..m {
            a[(m - 1, i)] = 1.0;
        }
        let mut b = nalgebra::DVector::<f64>::zeros(m);
        b[m - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular("stationary distribution is not unique".into()))?;
        Ok(pi.iter().copied().collect())
    }
}

impl TryFrom<Vec<Vec<f64>>> for RateMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        RateMatrix::new(rows)
    }
}

impl From<RateMatrix> for Vec<Vec<f64>> {
    fn from(r: RateMatrix) -> Self {
        r.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateBoundsRepr {
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
}

/// Elementwise interval bounds `a_ij <= lambda_ij <= b_ij` on the off-diagonal rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateBoundsRepr", into = "RateBoundsRepr")]
pub struct RateBounds {
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl RateBounds {
    pub fn new(lower: Vec<Vec<f64>>, upper: Vec<Vec<f64>>) -> Result<Self> {
        let m = lower.len();
        if m == 0 || upper.len() != m {
            return Err(Error::Model("rate bounds must be two nonempty square matrices of equal size".into()));
        }
        let mut lo = vec![0.0; m * m];
        let mut hi = vec![0.0; m * m];
        for i in 0..m {
            if lower[i].len() != m || upper[i].len() != m {
                return Err(Error::Model(format!("rate bound row {i} has the wrong length")));
            }
            for j in 0..m {
                if i == j {
                    continue;
                }
                let (a, b) = (lower[i][j], upper[i][j]);
                if !(a.is_finite() && b.is_finite()) || a < 0.0 || a > b {
                    return Err(Error::Model(format!(
                        "rate bounds [{a}, {b}] for ({i},{j}) violate 0 <= a <= b"
                    )));
                }
                lo[i * m + j] = a;
                hi[i * m + j] = b;
            }
        }
        Ok(RateBounds { m, lower: lo, upper: hi })
    }

    /// Same interval `[a, b]` on every off-diagonal entry.
    pub fn uniform(m: usize, a: f64, b: f64) -> Result<Self> {
        let mk = |v: f64| -> Vec<Vec<f64>> {
            (0..m).map(|i| (0..m).map(|j| if i == j { 0.0 } else { v }).collect()).collect()
        };
        RateBounds::new(mk(a), mk(b))
    }

    /// Degenerate interval around a fixed generator.
    pub fn degenerate(rates: &RateMatrix) -> Self {
        let m = rates.modes();
        let mut v = rates.data.clone();
        for i in 0..m {
            v[i * m + i] = 0.0;
        }
        RateBounds { m, lower: v.clone(), upper: v }
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.m + j]
    }

    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.upper[i * self.m + j]
    }

    /// Largest possible total leaving rate, used for probability validity.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.m)
            .map(|i| (0..self.m).filter(|&j| j != i).map(|j| self.upper(i, j)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, rates: &RateMatrix, tol: f64) -> bool {
        rates.modes() == self.m
            && (0..self.m).all(|i| {
                (0..self.m).filter(|&j| j != i).all(|j| {
                    let l = rates.rate(i, j);
                    l >= self.lower(i, j) - tol && l <= self.upper(i, j) + tol
                })
            })
    }

    /// Lower and upper generators.
    pub fn endpoints(&self) -> (RateMatrix, RateMatrix) {
        let rows = |v: &[f64]| -> Vec<Vec<f64>> { v.chunks(self.m).map(|r| r.to_vec()).collect() };
        (
            RateMatrix::new(rows(&self.lower)).expect("validated bounds"),
            RateMatrix::new(rows(&self.upper)).expect("validated bounds"),
        )
    }
}

impl TryFrom<RateBoundsRepr> for RateBounds {
    type Error = Error;
    fn try_from(r: RateBoundsRepr) -> Result<Self> {
        RateBounds::new(r.lower, r.upper)
    }
}

impl From<RateBounds> for RateBoundsRepr {
    fn from(b: RateBounds) -> Self {
        let rows = |v: &[f64]| -> Vec<Vec<f64>> { v.chunks(b.m).map(|r| r.to_vec()).collect() };
        RateBoundsRepr { lower: rows(&b.lower), upper: rows(&b.upper) }
    }
}

/// Either a known generator or interval bounds on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rates {
    Fixed(RateMatrix),
    Bounded(RateBounds),
}

impl Rates {
    pub fn modes(&self) -> usize {
        match self {
            Rates::Fixed(r) => r.modes(),
            Rates::Bounded(b) => b.modes(),
        }
    }

    /// Largest total leaving rate any admissible generator can have.
    pub fn max_exit_rate(&self) -> f64 {
        match self {
            Rates::Fixed(r) => r.max_exit_rate(),
            Rates::Bounded(b) => b.max_exit_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMethod {
    #[default]
    FirstOrder,
    Exact,
}

/// Row-stochastic `M x M` matrix of mode-switch probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }
}

/// Switching probabilities over a step of length `tau`.
pub fn transition_probabilities(
    rates: &RateMatrix,
    tau: f64,
    method: ProbabilityMethod,
) -> Result<TransitionMatrix> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Precondition(format!("step length tau = {tau} must be finite and >= 0")));
    }
    let m = rates.modes();
    let data = match method {
        ProbabilityMethod::FirstOrder => {
            if tau * rates.max_exit_rate() > 1.0 + ROW_TOL {
                return Err(Error::Numerics(format!(
                    "first-order probabilities leave [0,1]: tau * max exit rate = {}",
                    tau * rates.max_exit_rate()
                )));
            }
            let mut d = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        d[i * m + j] = rates.rate(i, j) * tau;
                    }
                }
                d[i * m + i] = (1.0 - rates.exit_rate(i) * tau).max(0.0);
            }
            d
        }
        ProbabilityMethod::Exact => {
            let a = DMatrix::from_row_slice(m, m, &rates.data) * tau;
            let e = expm_taylor(&a);
            let mut d = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    d[i * m + j] = e[(i, j)].max(0.0);
                }
            }
            d
        }
    };
    Ok(TransitionMatrix { m, data })
}

/// Matrix exponential by scaling and squaring a truncated Taylor series.
pub fn expm_taylor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() <= 1e-18 * result.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
