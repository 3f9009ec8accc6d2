//! Finite probability distributions, Markov kernels and the quantities that
//! control their contraction: total variation, Dobrushin coefficients and the
//! Boltzmann-Gibbs transform.
//!
//! State spaces are the index sets `0..d`. Every type here is an immutable
//! value object once constructed.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest tolerated deviation of a weight vector's sum from one before it is
/// renormalized.
pub const SUM_TOLERANCE: f64 = 1e-9;

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_probability_vector(weights: &[f64], what: &str) -> Result<f64> {
    if weights.is_empty() {
        return Err(invalid(format!("{what} must have at least one state")));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(invalid(format!("{what} has a negative or non-finite weight {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(invalid(format!("{what} sums to {sum}, not 1")));
    }
    Ok(sum)
}

/// Probability vector over `0..d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDistribution {
    weights: Vec<f64>,
}

impl FiniteDistribution {
    /// Validates the weights (non-negative, summing to one within
    /// [`SUM_TOLERANCE`]) and renormalizes them.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum = check_probability_vector(&weights, "distribution")?;
        Ok(Self {
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    /// Normalizes an arbitrary non-negative weight vector with positive mass.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("distribution must have at least one state"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(invalid(format!("negative or non-finite weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::Degenerate(format!("total mass {sum} cannot be normalized")));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("distribution must have at least one state"));
        }
        Ok(Self {
            weights: vec![1.0 / dim as f64; dim],
        })
    }

    pub fn dirac(dim: usize, state: usize) -> Result<Self> {
        if state >= dim {
            return Err(Error::IndexOutOfRange(format!("state {state} in dimension {dim}")));
        }
        let mut weights = vec![0.0; dim];
        weights[state] = 1.0;
        Ok(Self { weights })
    }

    /// Empirical measure of a set of finite states.
    pub fn empirical(dim: usize, states: &[usize]) -> Result<Self> {
        if states.is_empty() {
            return Err(invalid("empirical measure of an empty sample"));
        }
        let mut weights = vec![0.0; dim];
        for &s in states {
            if s >= dim {
                return Err(Error::IndexOutOfRange(format!("state {s} in dimension {dim}")));
            }
            weights[s] += 1.0;
        }
        let n = states.len() as f64;
        weights.iter_mut().for_each(|w| *w /= n);
        Ok(Self { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `mu(f)`.
    pub fn expect(&self, f: &[f64]) -> Result<f64> {
        check_dim(self.dim(), f.len())?;
        Ok(self.weights.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    /// `mu . K`.
    pub fn push(&self, kernel: &KernelMatrix) -> Result<FiniteDistribution> {
        check_dim(self.dim(), kernel.dim())?;
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (x, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, k) in out.iter_mut().zip(kernel.row(x)) {
                *o += w * k;
            }
        }
        FiniteDistribution::from_unnormalized(out)
    }

    /// Total mass of the states selected by `pred`.
    pub fn mass_where(&self, pred: impl Fn(usize) -> bool) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(i, _)| pred(*i))
            .map(|(_, w)| w)
            .sum()
    }
}

impl TryFrom<Vec<f64>> for FiniteDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FiniteDistribution> for Vec<f64> {
    fn from(d: FiniteDistribution) -> Self {
        d.weights
    }
}

/// Row-stochastic square matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(invalid("kernel must have at least one state"));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (x, row) in rows.into_iter().enumerate() {
            check_dim(dim, row.len())?;
            let sum = check_probability_vector(&row, &format!("kernel row {x}"))?;
            data.extend(row.into_iter().map(|v| v / sum));
        }
        Ok(Self { dim, data })
    }

    /// Builds a kernel from row-major data that is already stochastic up to
    /// rounding; rows are renormalized.
    pub(crate) fn from_raw(dim: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        for row in data.chunks_mut(dim) {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("kernel must have at least one state"));
        }
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Ok(Self { dim, data })
    }

    /// Rank-one kernel: every row equals `target`.
    pub fn constant(target: &FiniteDistribution) -> Self {
        let dim = target.dim();
        let data = (0..dim).flat_map(|_| target.weights().iter().copied()).collect();
        Self { dim, data }
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &KernelMatrix, weight: f64) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(invalid(format!("mixture weight {weight} outside [0,1]")));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| weight * a + (1.0 - weight) * b)
            .collect();
        Ok(Self::from_raw(self.dim, data))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.dim..(x + 1) * self.dim]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.dim + y]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    /// `self . other`.
    pub fn compose(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        check_dim(self.dim, other.dim)?;
        Ok(Self::from_raw(self.dim, matmul(self.dim, &self.data, &other.data)))
    }

    /// `K^m`; repeated squaring for large exponents.
    pub fn power(&self, m: u64) -> KernelMatrix {
        let d = self.dim;
        if m <= 8 {
            let mut acc = Self::identity(d).expect("non-empty");
            for _ in 0..m {
                acc = Self::from_raw(d, matmul(d, &acc.data, &self.data));
            }
            return acc;
        }
        let mut result: Option<Vec<f64>> = None;
        let mut base = self.data.clone();
        let mut e = m;
        while e > 0 {
            if e & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => renormalized(d, matmul(d, &r, &base)),
                });
            }
            e >>= 1;
            if e > 0 {
                base = renormalized(d, matmul(d, &base, &base));
            }
        }
        Self::from_raw(d, result.expect("m > 0"))
    }

    /// `K.f`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, f.len())?;
        Ok(self
            .rows()
            .map(|row| row.iter().zip(f).map(|(k, v)| k * v).sum())
            .collect())
    }

    /// Largest `|m(x) K(x,y) - m(y) K(y,x)|`.
    pub fn reversibility_defect(&self, m: &FiniteDistribution) -> Result<f64> {
        check_dim(self.dim, m.dim())?;
        let w = m.weights();
        let mut worst: f64 = 0.0;
        for x in 0..self.dim {
            for y in (x + 1)..self.dim {
                worst = worst.max((w[x] * self.get(x, y) - w[y] * self.get(y, x)).abs());
            }
        }
        Ok(worst)
    }
}

fn matmul(d: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        let out_row = &mut out[i * d..(i + 1) * d];
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(&b[k * d..(k + 1) * d]) {
                *o += aik * bkj;
            }
        }
    }
    out
}

fn renormalized(d: usize, mut data: Vec<f64>) -> Vec<f64> {
    for row in data.chunks_mut(d) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    data
}

/// Strictly positive function on `0..d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PotentialVector {
    values: Vec<f64>,
}

impl PotentialVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("potential must have at least one state"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(invalid(format!("potential value {v} is not strictly positive and finite")));
        }
        Ok(Self { values })
    }

    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; dim])
    }

    /// `exp(-scale * V)`.
    pub fn exp_neg(scale: f64, energy: &[f64]) -> Result<Self> {
        Self::new(energy.iter().map(|v| (-scale * v).exp()).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::MAX, f64::min)
    }
}

impl TryFrom<Vec<f64>> for PotentialVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PotentialVector> for Vec<f64> {
    fn from(p: PotentialVector) -> Self {
        p.values
    }
}

/// Finite real function on `0..d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BoundedFunction {
    values: Vec<f64>,
}

impl BoundedFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("function must have at least one state"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("function value {v} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::MAX, f64::min)
    }

    pub fn osc(&self) -> f64 {
        self.max() - self.min()
    }
}

impl TryFrom<Vec<f64>> for BoundedFunction {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BoundedFunction> for Vec<f64> {
    fn from(f: BoundedFunction) -> Self {
        f.values
    }
}

/// `||mu - nu||_tv`, computed as half the L1 distance.
pub fn total_variation(mu: &FiniteDistribution, nu: &FiniteDistribution) -> Result<f64> {
    check_dim(mu.dim(), nu.dim())?;
    Ok(half_l1(mu.weights(), nu.weights()))
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    (0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()).min(1.0)
}

/// Dobrushin ergodic coefficient: the largest total variation between two rows.
pub fn dobrushin(kernel: &KernelMatrix) -> f64 {
    let d = kernel.dim();
    let mut worst: f64 = 0.0;
    for x in 0..d {
        for y in (x + 1)..d {
            worst = worst.max(half_l1(kernel.row(x), kernel.row(y)));
        }
    }
    worst
}

/// `psi_G(mu)`: reweight by `G` and renormalize.
pub fn bg_transform(potential: &PotentialVector, mu: &FiniteDistribution) -> Result<FiniteDistribution> {
    check_dim(mu.dim(), potential.dim())?;
    let weighted: Vec<f64> = mu
        .weights()
        .iter()
        .zip(potential.values())
        .map(|(w, g)| w * g)
        .collect();
    let total: f64 = weighted.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Degenerate(format!("mu(G) = {total}")));
    }
    Ok(FiniteDistribution {
        weights: weighted.into_iter().map(|w| w / total).collect(),
    })
}

/// `max f - min f`.
pub fn osc(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("oscillation of an empty function"));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// `sup_{x,y} G(x)/G(y)`.
pub fn potential_ratio(potential: &PotentialVector) -> f64 {
    potential.max() / potential.min()
}
