//! Finite-state nonhomogeneous Markov chains: stochastic matrices,
//! transition schedules, and exact distribution recursions.
//!
//! States are labeled `1..=K` externally; all internal index math is
//! zero-based. Matrices are dense row-major; the target sizes (K up to a few
//! hundred) do not reward sparsity and the norm/coefficient computations
//! need full rows anyway.

use serde::Serialize;
use thiserror::Error;

use crate::Scalar;

/// Errors from chain construction and validation.
#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("state space must have at least 2 states, got {0}")]
    StateCountTooSmall(usize),
    #[error("matrix is not square: {rows} rows, row {row} has {cols} entries")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("negative entry at ({row},{col}): {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, outside tolerance {tol}")]
    RowSumOutOfTolerance { row: usize, sum: f64, tol: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weights must be nonnegative, entry {index} is {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, outside tolerance {tol}")]
    WeightSumOutOfTolerance { sum: f64, tol: f64 },
    #[error("observable value {value} at state {state} exceeds bound {bound}")]
    BoundExceeded { state: usize, value: f64, bound: f64 },
    #[error("epsilon schedule value {value} at k={k} lies outside [0,1]")]
    EpsilonOutOfRange { k: usize, value: f64 },
    #[error("epsilon schedule parameter {name} = {value} is invalid: {reason}")]
    EpsilonParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("schedule needs at least one matrix")]
    EmptySchedule,
    #[error("path state {state} out of range 1..={k}")]
    StateOutOfRange { state: u32, k: usize },
}

/// Truncation of the countable state space to `{1, ..., K}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StateSpace {
    size: usize,
}

impl StateSpace {
    pub fn new(size: usize) -> Result<Self, ChainError> {
        if size < 2 {
            return Err(ChainError::StateCountTooSmall(size));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// Dense row-major square matrix, not necessarily stochastic.
///
/// This is the carrier for differences, products, and running sums of
/// transition matrices in the diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, ChainError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(ChainError::NotSquare {
                    rows: dim,
                    row: i,
                    cols: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    /// Matrix norm: the maximum over rows of the row's absolute sum.
    ///
    /// Submultiplicative on square matrices and equal to 1 on every
    /// stochastic matrix.
    pub fn norm(&self) -> T {
        self.rows()
            .map(|r| r.iter().map(|x| x.abs()).fold(T::zero(), |a, b| a + b))
            .fold(T::zero(), T::max)
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matrix product");
        let dim = self.dim;
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for l in 0..dim {
                let a = self.get(i, l);
                if a == T::zero() {
                    continue;
                }
                for j in 0..dim {
                    let v = out.get(i, j) + a * other.get(l, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matrix difference");
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matrix sum");
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matrix sum");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }
}

/// Matrix norm `max_i sum_j |a(i,j)|` of a square matrix.
pub fn matrix_norm<T: Scalar>(a: &SquareMatrix<T>) -> T {
    a.norm()
}

/// Row-stochastic square matrix: entries nonnegative, each row summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticMatrix<T> {
    inner: SquareMatrix<T>,
}

impl<T: Scalar> StochasticMatrix<T> {
    /// Validates `rows` as a stochastic matrix.
    ///
    /// Entries must be nonnegative (negative zero is accepted) and each row
    /// sum must lie in `[1-tol, 1+tol]`. Accepted rows are renormalized so
    /// they sum to exactly 1, which stops drift from accumulating across
    /// long products.
    pub fn validate(rows: &[Vec<T>], tol: T) -> Result<Self, ChainError> {
        let mut m = SquareMatrix::from_rows(rows)?;
        let dim = m.dim();
        for i in 0..dim {
            for j in 0..dim {
                let v = m.get(i, j);
                if v < T::zero() {
                    return Err(ChainError::NegativeEntry {
                        row: i + 1,
                        col: j + 1,
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
            let sum: T = m.row(i).iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(ChainError::RowSumOutOfTolerance {
                    row: i + 1,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                    tol: tol.to_f64().unwrap_or(f64::NAN),
                });
            }
            renormalize_row(&mut m, i);
        }
        Ok(Self { inner: m })
    }

    /// Wraps a matrix that is stochastic by construction (convex
    /// combinations and products of stochastic matrices). No validation.
    pub(crate) fn from_square_unchecked(inner: SquareMatrix<T>) -> Self {
        Self { inner }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.inner.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.inner.row(i)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.inner.rows()
    }

    pub fn as_square(&self) -> &SquareMatrix<T> {
        &self.inner
    }

    /// Product of two stochastic matrices, stochastic by closure.
    pub fn mul(&self, other: &Self) -> Self {
        Self {
            inner: self.inner.mul(&other.inner),
        }
    }

    /// Constant-row matrix whose every row is `weights`.
    pub fn constant_rows(weights: &[T]) -> Result<Self, ChainError> {
        let rows: Vec<Vec<T>> = (0..weights.len()).map(|_| weights.to_vec()).collect();
        Self::validate(&rows, T::of_f64(1e-9))
    }

    /// Row-mean of the observable: `(P f)(i) = sum_j p(i,j) f(j)`.
    pub fn row_dot(&self, i: usize, f: &[T]) -> T {
        self.row(i).iter().zip(f).map(|(&p, &v)| p * v).sum()
    }
}

/// Forces the row's left-to-right sum to equal exactly 1.
///
/// After dividing by the row sum, the last entry is replaced by the value
/// that closes the running sum; the deficit-correction loop walks it onto
/// the (nonempty) set of values whose rounded total is exactly 1. Rows that
/// would need a negative closing entry fall back to folding the residual
/// into the largest entry.
fn renormalize_row<T: Scalar>(m: &mut SquareMatrix<T>, i: usize) {
    let dim = m.dim();
    let sum: T = m.row(i).iter().copied().sum();
    if sum == T::one() {
        return;
    }
    for j in 0..dim {
        m.set(i, j, m.get(i, j) / sum);
    }
    let partial: T = m.row(i)[..dim - 1].iter().copied().sum();
    if partial < T::one() {
        let mut x = T::one() - partial;
        for _ in 0..32 {
            if x < T::zero() {
                break;
            }
            let total = partial + x;
            if total == T::one() {
                m.set(i, dim - 1, x);
                return;
            }
            x = x + (T::one() - total);
        }
    }
    for _ in 0..8 {
        let sum2: T = m.row(i).iter().copied().sum();
        if sum2 == T::one() {
            return;
        }
        let resid = T::one() - sum2;
        let (jmax, _) = (0..dim)
            .map(|j| (j, m.get(i, j)))
            .fold((0, T::neg_infinity()), |acc, x| if x.1 > acc.1 { x } else { acc });
        m.set(i, jmax, m.get(i, jmax) + resid);
    }
}

/// Probability vector over the state space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialDistribution<T> {
    weights: Vec<T>,
}

impl<T: Scalar> InitialDistribution<T> {
    pub fn validate(weights: Vec<T>, tol: T) -> Result<Self, ChainError> {
        for (i, &w) in weights.iter().enumerate() {
            if w < T::zero() {
                return Err(ChainError::NegativeWeight {
                    index: i + 1,
                    value: w.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let sum: T = weights.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(ChainError::WeightSumOutOfTolerance {
                sum: sum.to_f64().unwrap_or(f64::NAN),
                tol: tol.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { weights })
    }

    /// Point mass at the 1-based state label.
    pub fn point_mass(state: usize, k: usize) -> Self {
        let mut weights = vec![T::zero(); k];
        weights[state - 1] = T::one();
        Self { weights }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// One step of the marginal recursion: `self * p`.
    pub fn step(&self, p: &StochasticMatrix<T>) -> Self {
        let k = self.weights.len();
        let mut out = vec![T::zero(); k];
        for (i, &w) in self.weights.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o = *o + w * p.get(i, j);
            }
        }
        Self { weights: out }
    }

    pub fn dot(&self, f: &[T]) -> T {
        self.weights.iter().zip(f).map(|(&w, &v)| w * v).sum()
    }
}

/// Generator for the perturbation sizes `eps_k`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EpsilonSchedule<T> {
    /// `eps_k = c * k^(-p)`.
    Power { c: T, p: T },
    /// `eps_k = c * r^k`.
    Geometric { c: T, r: T },
    /// Explicit values; indices past the end repeat the last value.
    Explicit { values: Vec<T> },
}

impl<T: Scalar> EpsilonSchedule<T> {
    pub fn power(c: T, p: T) -> Result<Self, ChainError> {
        if !(c >= T::zero() && c <= T::one()) {
            return Err(ChainError::EpsilonParameter {
                name: "c",
                value: c.to_f64().unwrap_or(f64::NAN),
                reason: "eps_1 = c must lie in [0,1]",
            });
        }
        if !(p > T::zero()) {
            return Err(ChainError::EpsilonParameter {
                name: "p",
                value: p.to_f64().unwrap_or(f64::NAN),
                reason: "exponent must be positive",
            });
        }
        Ok(Self::Power { c, p })
    }

    pub fn geometric(c: T, r: T) -> Result<Self, ChainError> {
        if !(r > T::zero() && r < T::one()) {
            return Err(ChainError::EpsilonParameter {
                name: "r",
                value: r.to_f64().unwrap_or(f64::NAN),
                reason: "ratio must lie in (0,1)",
            });
        }
        if !(c >= T::zero() && c * r <= T::one()) {
            return Err(ChainError::EpsilonParameter {
                name: "c",
                value: c.to_f64().unwrap_or(f64::NAN),
                reason: "eps_1 = c*r must lie in [0,1]",
            });
        }
        Ok(Self::Geometric { c, r })
    }

    pub fn explicit(values: Vec<T>) -> Result<Self, ChainError> {
        if values.is_empty() {
            return Err(ChainError::EpsilonParameter {
                name: "values",
                value: 0.0,
                reason: "explicit schedule needs at least one value",
            });
        }
        for (k, &v) in values.iter().enumerate() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(ChainError::EpsilonOutOfRange {
                    k: k + 1,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self::Explicit { values })
    }

    /// `eps_k` for `k >= 1`.
    pub fn value(&self, k: usize) -> T {
        debug_assert!(k >= 1);
        match self {
            Self::Power { c, p } => *c * T::of_usize(k).powf(-*p),
            Self::Geometric { c, r } => *c * r.powi(k as i32),
            Self::Explicit { values } => values[(k - 1).min(values.len() - 1)],
        }
    }
}

/// Generator of the transition matrix sequence `{P_k, k >= 1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TransitionSchedule<T> {
    /// Finite list `P_1, ..., P_L`; indices past the end repeat `P_L`.
    Explicit { matrices: Vec<StochasticMatrix<T>> },
    /// `P_k = P` for all `k`.
    Homogeneous { p: StochasticMatrix<T> },
    /// `P_k = (1-eps_k) * base + eps_k * alt`.
    Perturbed {
        base: StochasticMatrix<T>,
        alt: StochasticMatrix<T>,
        eps: EpsilonSchedule<T>,
    },
}

impl<T: Scalar> TransitionSchedule<T> {
    pub fn explicit(matrices: Vec<StochasticMatrix<T>>) -> Result<Self, ChainError> {
        if matrices.is_empty() {
            return Err(ChainError::EmptySchedule);
        }
        let dim = matrices[0].dim();
        for m in &matrices {
            if m.dim() != dim {
                return Err(ChainError::DimensionMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
        }
        Ok(Self::Explicit { matrices })
    }

    pub fn homogeneous(p: StochasticMatrix<T>) -> Self {
        Self::Homogeneous { p }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Explicit { matrices } => matrices[0].dim(),
            Self::Homogeneous { p } => p.dim(),
            Self::Perturbed { base, .. } => base.dim(),
        }
    }

    /// The matrix `P_k`, `k >= 1`. Allocates for the perturbed kind.
    pub fn matrix_at(&self, k: usize) -> StochasticMatrix<T> {
        debug_assert!(k >= 1);
        match self {
            Self::Explicit { matrices } => matrices[(k - 1).min(matrices.len() - 1)].clone(),
            Self::Homogeneous { p } => p.clone(),
            Self::Perturbed { base, alt, eps } => {
                let e = eps.value(k);
                let inner = base
                    .as_square()
                    .scale(T::one() - e)
                    .add(&alt.as_square().scale(e));
                StochasticMatrix::from_square_unchecked(inner)
            }
        }
    }

    /// Writes row `i` of `P_k` into `buf` without allocating.
    pub fn row_at(&self, k: usize, i: usize, buf: &mut [T]) {
        debug_assert!(k >= 1);
        match self {
            Self::Explicit { matrices } => {
                buf.copy_from_slice(matrices[(k - 1).min(matrices.len() - 1)].row(i));
            }
            Self::Homogeneous { p } => buf.copy_from_slice(p.row(i)),
            Self::Perturbed { base, alt, eps } => {
                let e = eps.value(k);
                for ((b, &pb), &pa) in buf.iter_mut().zip(base.row(i)).zip(alt.row(i)) {
                    *b = (T::one() - e) * pb + e * pa;
                }
            }
        }
    }

    /// The limit (reference) matrix of the schedule: the homogeneous matrix,
    /// the perturbation base, or the last explicit matrix.
    pub fn limit_matrix(&self) -> &StochasticMatrix<T> {
        match self {
            Self::Explicit { matrices } => matrices.last().expect("nonempty by construction"),
            Self::Homogeneous { p } => p,
            Self::Perturbed { base, .. } => base,
        }
    }
}

/// Builds the convex perturbation schedule `P_k = (1-eps_k) base + eps_k alt`.
pub fn make_perturbed_schedule<T: Scalar>(
    base: StochasticMatrix<T>,
    alt: StochasticMatrix<T>,
    eps: EpsilonSchedule<T>,
) -> Result<TransitionSchedule<T>, ChainError> {
    if base.dim() != alt.dim() {
        return Err(ChainError::DimensionMismatch {
            expected: base.dim(),
            found: alt.dim(),
        });
    }
    Ok(TransitionSchedule::Perturbed { base, alt, eps })
}

/// Bounded real function on states, given by its value vector and bound `M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observable<T> {
    values: Vec<T>,
    bound: T,
}

impl<T: Scalar> Observable<T> {
    pub fn new(values: Vec<T>, bound: T) -> Result<Self, ChainError> {
        for (i, &v) in values.iter().enumerate() {
            if v.abs() > bound {
                return Err(ChainError::BoundExceeded {
                    state: i + 1,
                    value: v.to_f64().unwrap_or(f64::NAN),
                    bound: bound.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { values, bound })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn bound(&self) -> T {
        self.bound
    }

    /// Value at the 1-based state label.
    pub fn at(&self, state: u32) -> T {
        self.values[state as usize - 1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Complete definition of a chain: state space, initial law, schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSpec<T> {
    space: StateSpace,
    initial: InitialDistribution<T>,
    schedule: TransitionSchedule<T>,
}

impl<T: Scalar> ChainSpec<T> {
    pub fn new(
        space: StateSpace,
        initial: InitialDistribution<T>,
        schedule: TransitionSchedule<T>,
    ) -> Result<Self, ChainError> {
        if initial.len() != space.size() {
            return Err(ChainError::DimensionMismatch {
                expected: space.size(),
                found: initial.len(),
            });
        }
        if schedule.dim() != space.size() {
            return Err(ChainError::DimensionMismatch {
                expected: space.size(),
                found: schedule.dim(),
            });
        }
        Ok(Self {
            space,
            initial,
            schedule,
        })
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn initial(&self) -> &InitialDistribution<T> {
        &self.initial
    }

    pub fn schedule(&self) -> &TransitionSchedule<T> {
        &self.schedule
    }
}

/// One realized trajectory `X_0, ..., X_n` with 1-based state labels.
///
/// `seed` is the value that regenerates the path through
/// [`crate::monte_carlo::sample_path`]; it is 0 for enumerated or
/// hand-built paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Path {
    pub states: Vec<u32>,
    pub seed: u64,
}

impl Path {
    pub fn new(states: Vec<u32>, seed: u64, k: usize) -> Result<Self, ChainError> {
        for &s in &states {
            if s < 1 || s as usize > k {
                return Err(ChainError::StateOutOfRange { state: s, k });
            }
        }
        Ok(Self { states, seed })
    }

    /// Number of transitions, i.e. `n` for a path `X_0..X_n`.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Product block `P^(m,n) = P_{m+1} ... P_n`; the identity when `n = m`
/// (empty-product convention, which makes the composition law
/// `P^(m,n) = P^(m,r) P^(r,n)` hold for all `m <= r <= n`).
pub fn transition_block<T: Scalar>(
    schedule: &TransitionSchedule<T>,
    m: usize,
    n: usize,
) -> StochasticMatrix<T> {
    assert!(n >= m, "transition block needs n >= m");
    let mut acc = SquareMatrix::identity(schedule.dim());
    for k in (m + 1)..=n {
        acc = acc.mul(schedule.matrix_at(k).as_square());
    }
    StochasticMatrix::from_square_unchecked(acc)
}

/// Marginal law `mu^(k) = mu^(0) P_1 ... P_k`.
pub fn marginal<T: Scalar>(spec: &ChainSpec<T>, k: usize) -> InitialDistribution<T> {
    let mut mu = spec.initial().clone();
    for step in 1..=k {
        mu = mu.step(&spec.schedule().matrix_at(step));
    }
    mu
}

/// Exact `E[S_n] = sum_{k=1..n} sum_j f(j) mu^(k)(j)`, computed by running
/// the marginal recursion once.
pub fn expected_sum<T: Scalar>(spec: &ChainSpec<T>, f: &Observable<T>, n: usize) -> T {
    let mut mu = spec.initial().clone();
    let mut total = T::zero();
    for k in 1..=n {
        mu = mu.step(&spec.schedule().matrix_at(k));
        total = total + mu.dot(f.values());
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn swap2() -> StochasticMatrix<f64> {
        StochasticMatrix::validate(&[vec![0.0, 1.0], vec![1.0, 0.0]], 1e-12).unwrap()
    }

    pub(crate) fn fixture_b() -> StochasticMatrix<f64> {
        StochasticMatrix::validate(&[vec![0.9, 0.1], vec![0.2, 0.8]], 1e-12).unwrap()
    }

    #[test]
    fn validate_accepts_identity() {
        let m = StochasticMatrix::validate(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1e-12).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn validate_accepts_exact_rows() {
        let m = StochasticMatrix::validate(&[vec![0.5, 0.5], vec![0.3, 0.7]], 1e-12).unwrap();
        assert_eq!(m.row(1), &[0.3, 0.7]);
    }

    #[test]
    fn validate_rejects_bad_row_sum() {
        let err =
            StochasticMatrix::validate(&[vec![0.5, 0.6], vec![0.3, 0.7]], 1e-12).unwrap_err();
        match err {
            ChainError::RowSumOutOfTolerance { row, sum, .. } => {
                assert_eq!(row, 1);
                assert_abs_diff_eq!(sum, 1.1, epsilon = 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_negative_entry() {
        let err =
            StochasticMatrix::validate(&[vec![1.1, -0.1], vec![0.3, 0.7]], 1e-12).unwrap_err();
        assert!(matches!(err, ChainError::NegativeEntry { row: 1, col: 2, .. }));
    }

    #[test]
    fn validate_renormalizes_to_exact_unit_rows() {
        // row sums 1 +/- 5e-13 pass at tol 1e-12 and come out exactly 1
        let m = StochasticMatrix::validate(
            &[vec![0.25 + 3e-13, 0.75], vec![0.1, 0.9 - 4e-13]],
            1e-12,
        )
        .unwrap();
        for i in 0..2 {
            let s: f64 = m.row(i).iter().sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn norm_of_stochastic_is_one() {
        assert_eq!(matrix_norm(fixture_b().as_square()), 1.0);
        assert_eq!(matrix_norm(swap2().as_square()), 1.0);
    }

    #[test]
    fn norm_of_zero_is_zero() {
        assert_eq!(matrix_norm(&SquareMatrix::<f64>::zeros(3)), 0.0);
    }

    #[test]
    fn norm_of_difference_matches_hand_value() {
        let half = StochasticMatrix::validate(&[vec![0.5, 0.5], vec![0.5, 0.5]], 1e-12).unwrap();
        let d = fixture_b().as_square().sub(half.as_square());
        // row sums |0.4|+|-0.4| = 0.8 and |-0.3|+|0.3| = 0.6
        assert_abs_diff_eq!(matrix_norm(&d), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn transition_block_empty_product_is_identity() {
        let sched = TransitionSchedule::homogeneous(fixture_b());
        let b = transition_block(&sched, 3, 3);
        assert_eq!(b.as_square(), &SquareMatrix::identity(2));
    }

    #[test]
    fn transition_block_homogeneous_is_power() {
        let sched = TransitionSchedule::homogeneous(fixture_b());
        let b = transition_block(&sched, 0, 3);
        let p = fixture_b();
        let expect = p.mul(&p).mul(&p);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(b.get(i, j), expect.get(i, j), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn transition_block_two_swaps_is_identity() {
        let sched = TransitionSchedule::explicit(vec![swap2(), swap2()]).unwrap();
        let b = transition_block(&sched, 0, 2);
        assert_eq!(b.as_square(), &SquareMatrix::identity(2));
    }

    #[test]
    fn transition_block_composition_law() {
        let sched = TransitionSchedule::Perturbed {
            base: fixture_b(),
            alt: swap2(),
            eps: EpsilonSchedule::power(1.0, 1.0).unwrap(),
        };
        let full = transition_block(&sched, 1, 7);
        let split = transition_block(&sched, 1, 4).mul(&transition_block(&sched, 4, 7));
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(full.get(i, j), split.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn marginal_at_zero_is_initial() {
        let spec = two_state_spec(fixture_b(), [1.0, 0.0]);
        assert_eq!(marginal(&spec, 0).weights(), &[1.0, 0.0]);
    }

    #[test]
    fn marginal_swap_moves_mass() {
        let spec = two_state_spec(swap2(), [1.0, 0.0]);
        assert_eq!(marginal(&spec, 1).weights(), &[0.0, 1.0]);
    }

    #[test]
    fn marginal_two_steps_hand_value() {
        let spec = two_state_spec(fixture_b(), [1.0, 0.0]);
        let mu2 = marginal(&spec, 2);
        assert_abs_diff_eq!(mu2.weights()[0], 0.83, epsilon = 1e-15);
        assert_abs_diff_eq!(mu2.weights()[1], 0.17, epsilon = 1e-15);
    }

    #[test]
    fn marginal_recursion_invariant() {
        let spec = two_state_spec(fixture_b(), [0.4, 0.6]);
        for k in 0..6 {
            let lhs = marginal(&spec, k + 1);
            let rhs = marginal(&spec, k).step(&spec.schedule().matrix_at(k + 1));
            for (a, b) in lhs.weights().iter().zip(rhs.weights()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn expected_sum_constant_observable() {
        let spec = two_state_spec(fixture_b(), [1.0, 0.0]);
        let f = Observable::new(vec![3.0, 3.0], 3.0).unwrap();
        assert_abs_diff_eq!(expected_sum(&spec, &f, 7), 21.0, epsilon = 1e-12);
    }

    #[test]
    fn expected_sum_alternating_path() {
        let spec = two_state_spec(swap2(), [1.0, 0.0]);
        let f = Observable::new(vec![0.0, 1.0], 1.0).unwrap();
        // path 1,2,1: state 2 visited exactly once in steps 1..2
        assert_abs_diff_eq!(expected_sum(&spec, &f, 2), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn perturbed_schedule_identities() {
        let base = fixture_b();
        let alt = swap2();
        let zero = make_perturbed_schedule(
            base.clone(),
            alt.clone(),
            EpsilonSchedule::explicit(vec![0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(zero.matrix_at(5), base);
        let one = make_perturbed_schedule(
            base.clone(),
            alt.clone(),
            EpsilonSchedule::explicit(vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(one.matrix_at(3), alt);
        let harmonic = make_perturbed_schedule(
            base.clone(),
            alt.clone(),
            EpsilonSchedule::power(1.0, 1.0).unwrap(),
        )
        .unwrap();
        let p2 = harmonic.matrix_at(2);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    p2.get(i, j),
                    0.5 * base.get(i, j) + 0.5 * alt.get(i, j),
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn perturbed_norm_identity() {
        // ||P_k - base|| = eps_k * ||alt - base||
        let base = fixture_b();
        let alt = swap2();
        let eps = EpsilonSchedule::power(0.8, 0.5).unwrap();
        let sched =
            make_perturbed_schedule(base.clone(), alt.clone(), eps.clone()).unwrap();
        let gap = matrix_norm(&alt.as_square().sub(base.as_square()));
        for k in [1, 2, 3, 10, 97] {
            let lhs = matrix_norm(&sched.matrix_at(k).as_square().sub(base.as_square()));
            assert_abs_diff_eq!(lhs, eps.value(k) * gap, epsilon = 1e-12);
        }
    }

    #[test]
    fn perturbed_dimension_mismatch_rejected() {
        let base = fixture_b();
        let alt = StochasticMatrix::validate(
            &[
                vec![0.2, 0.3, 0.5],
                vec![0.1, 0.8, 0.1],
                vec![0.4, 0.4, 0.2],
            ],
            1e-12,
        )
        .unwrap();
        let err = make_perturbed_schedule(base, alt, EpsilonSchedule::explicit(vec![0.5]).unwrap())
            .unwrap_err();
        assert!(matches!(err, ChainError::DimensionMismatch { .. }));
    }

    #[test]
    fn epsilon_forms() {
        let p = EpsilonSchedule::power(0.5, 2.0).unwrap();
        assert_abs_diff_eq!(p.value(2), 0.125, epsilon = 1e-15);
        let g = EpsilonSchedule::geometric(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(g.value(3), 0.125, epsilon = 1e-15);
        let e = EpsilonSchedule::explicit(vec![0.2, 0.1]).unwrap();
        assert_eq!(e.value(1), 0.2);
        assert_eq!(e.value(9), 0.1);
        assert!(EpsilonSchedule::power(1.5, 1.0).is_err());
        assert!(EpsilonSchedule::geometric(1.0, 1.5).is_err());
        assert!(EpsilonSchedule::explicit(vec![1.2]).is_err());
    }

    #[test]
    fn state_space_and_path_validation() {
        assert!(StateSpace::new(1).is_err());
        assert!(StateSpace::new(2).is_ok());
        assert!(Path::new(vec![1, 2, 1], 0, 2).is_ok());
        assert!(Path::new(vec![1, 3], 0, 2).is_err());
        assert!(Path::new(vec![0], 0, 2).is_err());
    }

    #[test]
    fn observable_bound_checked() {
        assert!(Observable::new(vec![0.0, 1.0], 1.0).is_ok());
        assert!(Observable::new(vec![0.0, 1.5], 1.0).is_err());
    }

    pub(crate) fn two_state_spec(
        p: StochasticMatrix<f64>,
        mu: [f64; 2],
    ) -> ChainSpec<f64> {
        ChainSpec::new(
            StateSpace::new(2).unwrap(),
            InitialDistribution::validate(mu.to_vec(), 1e-12).unwrap(),
            TransitionSchedule::homogeneous(p),
        )
        .unwrap()
    }

    #[test]
    fn f32_scalar_smoke() {
        let m = StochasticMatrix::<f32>::validate(
            &[vec![0.5, 0.5], vec![0.25, 0.75]],
            1e-6,
        )
        .unwrap();
        assert_eq!(matrix_norm(m.as_square()), 1.0f32);
    }
}
