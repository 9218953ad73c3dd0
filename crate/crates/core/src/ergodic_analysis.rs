//! Ergodic-structure computations on stochastic matrices and schedules:
//! Dobrushin coefficients, stationary distributions, periodic class
//! decomposition, and the convergence diagnostics used to check the
//! hypotheses of the limit theorems numerically.
//!
//! Certification here is always numeric — a residual falling below a
//! tolerance within a horizon — never a proof. Reports carry the horizon
//! and tolerance used.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chain_model::{matrix_norm, SquareMatrix, StochasticMatrix, TransitionSchedule};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ErgodicError {
    #[error("matrix is not irreducible (positive-entry digraph is not strongly connected)")]
    NotIrreducible,
    #[error("stationary iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error(
        "class {class} residual {last_residual} still above tolerance at the horizon; \
         not certified within budget (not a mathematical negative)"
    )]
    HorizonExceeded { class: usize, last_residual: f64 },
}

/// Identifier for the condition a diagnostic curve tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveLabel {
    CesaroEq3,
    Cond4,
    Cond6,
    StrongErgodicity,
    DriftBound,
}

impl CurveLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CesaroEq3 => "cesaro_eq3",
            Self::Cond4 => "cond4",
            Self::Cond6 => "cond6",
            Self::StrongErgodicity => "strong_ergodicity",
            Self::DriftBound => "drift_bound",
        }
    }
}

/// A nonnegative diagnostic value tracked against the time index `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticCurve<T> {
    pub label: CurveLabel,
    pub points: Vec<(usize, T)>,
}

impl<T: Scalar> DiagnosticCurve<T> {
    pub fn last_value(&self) -> Option<T> {
        self.points.last().map(|&(_, v)| v)
    }

    pub fn first_value(&self) -> Option<T> {
        self.points.first().map(|&(_, v)| v)
    }
}

/// Ergodic structure of an irreducible stochastic matrix, with numeric
/// strong-ergodicity certification of its cyclic-class restrictions.
#[derive(Debug, Clone, Serialize)]
pub struct ErgodicReport<T> {
    /// Period `d` of the matrix.
    pub period: usize,
    /// Cyclic classes as 1-based state labels; class `l` maps into class
    /// `(l+1) mod d` in one step.
    pub classes: Vec<Vec<usize>>,
    /// Stationary distribution of the full matrix.
    pub pi: Vec<T>,
    /// Per-class residual curves `||T_l^n - R_l||` against `n`.
    pub strong_ergodicity_residuals: Vec<DiagnosticCurve<T>>,
    /// Constant matrix with every row equal to `pi`.
    pub constant_matrix: SquareMatrix<T>,
    /// Horizon used for certification.
    pub horizon: usize,
    /// Residual tolerance used for certification.
    pub tol: f64,
}

/// Dobrushin coefficient `delta(P) = max_{i,k} sum_j [p(i,j)-p(k,j)]^+`.
///
/// Zero exactly when all rows are identical; 1 when two rows have disjoint
/// support. Always in `[0,1]` for a stochastic matrix.
pub fn dobrushin_delta<T: Scalar>(p: &StochasticMatrix<T>) -> T {
    let k = p.dim();
    let mut best = T::zero();
    for i in 0..k {
        for l in (i + 1)..k {
            // rows sum to the same value, so the positive part is symmetric
            let mut s = T::zero();
            for j in 0..k {
                let d = p.get(i, j) - p.get(l, j);
                if d > T::zero() {
                    s = s + d;
                }
            }
            if s > best {
                best = s;
            }
        }
    }
    best
}

fn positive_adjacency<T: Scalar>(p: &StochasticMatrix<T>) -> Vec<Vec<usize>> {
    let k = p.dim();
    (0..k)
        .map(|i| (0..k).filter(|&j| p.get(i, j) > T::zero()).collect())
        .collect()
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Strong connectivity of the positive-entry digraph.
pub fn is_irreducible<T: Scalar>(p: &StochasticMatrix<T>) -> bool {
    let adj = positive_adjacency(p);
    if !reachable(&adj, 0).iter().all(|&r| r) {
        return false;
    }
    let k = p.dim();
    let mut rev = vec![Vec::new(); k];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            rev[v].push(u);
        }
    }
    reachable(&rev, 0).iter().all(|&r| r)
}

fn l1_residual<T: Scalar>(pi: &[T], p: &StochasticMatrix<T>) -> T {
    let k = p.dim();
    let mut res = T::zero();
    for j in 0..k {
        let mut pj = T::zero();
        for (i, &w) in pi.iter().enumerate() {
            pj = pj + w * p.get(i, j);
        }
        res = res + (pj - pi[j]).abs();
    }
    res
}

/// Forces a nonnegative vector to sum to exactly 1.
fn normalize_simplex<T: Scalar>(v: &mut [T]) {
    for _ in 0..8 {
        let sum: T = v.iter().copied().sum();
        if sum == T::one() {
            return;
        }
        for x in v.iter_mut() {
            *x = *x / sum;
        }
        let sum2: T = v.iter().copied().sum();
        let resid = T::one() - sum2;
        let mut jmax = 0;
        for (j, x) in v.iter().enumerate() {
            if *x > v[jmax] {
                jmax = j;
            }
        }
        v[jmax] = v[jmax] + resid;
    }
}

/// Direct solve of the stationary system: `P^T - I` with the last equation
/// replaced by the normalization row. Returns `None` when elimination meets
/// a negligible pivot.
fn stationary_direct<T: Scalar>(p: &StochasticMatrix<T>) -> Option<Vec<T>> {
    let k = p.dim();
    let mut a = vec![T::zero(); k * k];
    let mut b = vec![T::zero(); k];
    for i in 0..k.saturating_sub(1) {
        for j in 0..k {
            // row i of (P^T - I): p(j,i) - delta_ij
            a[i * k + j] = p.get(j, i) - if i == j { T::one() } else { T::zero() };
        }
    }
    for j in 0..k {
        a[(k - 1) * k + j] = T::one();
    }
    b[k - 1] = T::one();

    let tiny = T::of_f64(1e-13);
    for col in 0..k {
        let mut piv = col;
        for r in (col + 1)..k {
            if a[r * k + col].abs() > a[piv * k + col].abs() {
                piv = r;
            }
        }
        if a[piv * k + col].abs() < tiny {
            return None;
        }
        if piv != col {
            for j in 0..k {
                a.swap(col * k + j, piv * k + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * k + col];
        for r in (col + 1)..k {
            let factor = a[r * k + col] / d;
            if factor == T::zero() {
                continue;
            }
            for j in col..k {
                a[r * k + j] = a[r * k + j] - factor * a[col * k + j];
            }
            b[r] = b[r] - factor * b[col];
        }
    }
    let mut x = vec![T::zero(); k];
    for row in (0..k).rev() {
        let mut s = b[row];
        for j in (row + 1)..k {
            s = s - a[row * k + j] * x[j];
        }
        x[row] = s / a[row * k + row];
    }
    Some(x)
}

const POWER_ITER_MAX: usize = 1_000_000;

/// Power iteration on the lazy kernel `(P + I)/2`, which shares the
/// stationary vector of `P` but converges even when `P` is periodic.
fn stationary_power<T: Scalar>(p: &StochasticMatrix<T>, tol: T) -> Result<Vec<T>, ErgodicError> {
    let k = p.dim();
    let mut mu = vec![T::one() / T::of_usize(k); k];
    let mut next = vec![T::zero(); k];
    let half = T::of_f64(0.5);
    for _ in 0..POWER_ITER_MAX {
        for x in next.iter_mut() {
            *x = T::zero();
        }
        for (i, &w) in mu.iter().enumerate() {
            for (j, n) in next.iter_mut().enumerate() {
                *n = *n + w * p.get(i, j);
            }
        }
        for (n, &m) in next.iter_mut().zip(mu.iter()) {
            *n = half * (*n + m);
        }
        std::mem::swap(&mut mu, &mut next);
        if l1_residual(&mu, p) <= tol {
            normalize_simplex(&mut mu);
            return Ok(mu);
        }
    }
    Err(ErgodicError::NoConvergence {
        iterations: POWER_ITER_MAX,
    })
}

/// Stationary distribution of an irreducible stochastic matrix, with
/// `||pi P - pi||_1 <= tol`, `pi >= 0`, `sum pi = 1`.
pub fn stationary_distribution<T: Scalar>(
    p: &StochasticMatrix<T>,
    tol: T,
) -> Result<Vec<T>, ErgodicError> {
    if !is_irreducible(p) {
        return Err(ErgodicError::NotIrreducible);
    }
    if let Some(mut pi) = stationary_direct(p) {
        // rounding can leave harmless negative dust on sparse problems
        for x in pi.iter_mut() {
            if *x < T::zero() && *x > -tol {
                *x = T::zero();
            }
        }
        normalize_simplex(&mut pi);
        if pi.iter().all(|&x| x >= T::zero()) && l1_residual(&pi, p) <= tol {
            return Ok(pi);
        }
    }
    stationary_power(p, tol)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period `d` and cyclic classes `C_0..C_{d-1}` of an irreducible matrix.
///
/// Breadth-first level labeling from state 1; `d` is the gcd over all
/// positive entries `(u,v)` of `level(u)+1-level(v)`, and class `l`
/// collects the states whose level is `l (mod d)`. Classes hold 1-based
/// labels.
pub fn period_and_classes<T: Scalar>(
    p: &StochasticMatrix<T>,
) -> Result<(usize, Vec<Vec<usize>>), ErgodicError> {
    if !is_irreducible(p) {
        return Err(ErgodicError::NotIrreducible);
    }
    let k = p.dim();
    let adj = positive_adjacency(p);
    let mut level = vec![usize::MAX; k];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut d = 0usize;
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            let diff = (level[u] + 1).abs_diff(level[v]);
            d = gcd(d, diff);
        }
    }
    if d == 0 {
        // every edge level-consistent with a tree: single cycle structure
        d = 1;
    }
    let mut classes = vec![Vec::new(); d];
    for (state, &lv) in level.iter().enumerate() {
        classes[lv % d].push(state + 1);
    }
    Ok((d, classes))
}

/// Certifies periodic strong ergodicity numerically: decomposes `P` into
/// its `d` cyclic classes, restricts `P^d` to each class, and powers the
/// restriction until `||T_l^n - R_l||` falls below `tol`. Fails with
/// [`ErgodicError::HorizonExceeded`] when some class does not certify
/// within `horizon` steps.
pub fn check_periodic_strong_ergodicity<T: Scalar>(
    p: &StochasticMatrix<T>,
    horizon: usize,
    tol: T,
) -> Result<ErgodicReport<T>, ErgodicError> {
    let (period, classes) = period_and_classes(p)?;
    let pi = stationary_distribution(p, T::of_f64(1e-10))?;
    let k = p.dim();

    // P^d restricted to C_l x C_l is stochastic: in d steps all mass
    // returns to the class.
    let mut pd = SquareMatrix::identity(k);
    for _ in 0..period {
        pd = pd.mul(p.as_square());
    }

    let mut residual_curves = Vec::with_capacity(period);
    for (l, class) in classes.iter().enumerate() {
        let tl = StochasticMatrix::from_square_unchecked(restrict(&pd, class));
        let pi_l = stationary_distribution(&tl, T::of_f64(1e-10))?;
        let r_l = constant_matrix(&pi_l);
        let mut power = tl.clone();
        let mut points = Vec::new();
        let mut certified = false;
        for n in 1..=horizon {
            let res = matrix_norm(&power.as_square().sub(&r_l));
            points.push((n, res));
            if res <= tol {
                certified = true;
                break;
            }
            power = power.mul(&tl);
        }
        if !certified {
            let last = points.last().map(|&(_, v)| v).unwrap_or(T::nan());
            return Err(ErgodicError::HorizonExceeded {
                class: l,
                last_residual: last.to_f64().unwrap_or(f64::NAN),
            });
        }
        residual_curves.push(DiagnosticCurve {
            label: CurveLabel::StrongErgodicity,
            points,
        });
    }

    Ok(ErgodicReport {
        period,
        classes,
        constant_matrix: constant_matrix(&pi),
        pi,
        strong_ergodicity_residuals: residual_curves,
        horizon,
        tol: tol.to_f64().unwrap_or(f64::NAN),
    })
}

fn restrict<T: Scalar>(m: &SquareMatrix<T>, class: &[usize]) -> SquareMatrix<T> {
    let mut out = SquareMatrix::zeros(class.len());
    for (a, &i) in class.iter().enumerate() {
        for (b, &j) in class.iter().enumerate() {
            out.set(a, b, m.get(i - 1, j - 1));
        }
    }
    out
}

fn constant_matrix<T: Scalar>(pi: &[T]) -> SquareMatrix<T> {
    let k = pi.len();
    let mut r = SquareMatrix::zeros(k);
    for i in 0..k {
        for (j, &w) in pi.iter().enumerate() {
            r.set(i, j, w);
        }
    }
    r
}

/// Curve `n -> ||P^(m,m+n) - R||` for `n = 1..n_max`, one product per step.
///
/// `r` is expected to be constant-row.
pub fn strong_ergodicity_curve<T: Scalar>(
    schedule: &TransitionSchedule<T>,
    r: &SquareMatrix<T>,
    m: usize,
    n_max: usize,
) -> DiagnosticCurve<T> {
    let mut block = SquareMatrix::identity(schedule.dim());
    let mut points = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        block = block.mul(schedule.matrix_at(m + n).as_square());
        points.push((n, matrix_norm(&block.sub(r))));
    }
    DiagnosticCurve {
        label: CurveLabel::StrongErgodicity,
        points,
    }
}

/// Geometric grid `1, 2, 4, ...` up to and including `n_max`.
fn log_grid(n_max: usize) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut n = 1usize;
    while n < n_max {
        grid.push(n);
        n *= 2;
    }
    grid.push(n_max);
    grid.dedup();
    grid
}

/// Uniform Cesàro diagnostic: for each grid `n`,
/// `max_{0<=m<=m_max} || (1/n) sum_{t=1..n} P^(m,m+t) - R ||`.
///
/// The supremum over all `m >= 0` is truncated at `m_max`; callers surface
/// that truncation in report metadata.
pub fn cesaro_uniform_diagnostic<T: Scalar>(
    schedule: &TransitionSchedule<T>,
    r: &SquareMatrix<T>,
    n_max: usize,
    m_max: usize,
) -> DiagnosticCurve<T> {
    let grid = log_grid(n_max);
    let per_m: Vec<Vec<T>> = (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let mut block = SquareMatrix::identity(schedule.dim());
            let mut sum = SquareMatrix::zeros(schedule.dim());
            let mut values = Vec::with_capacity(grid.len());
            let mut gi = 0;
            for t in 1..=n_max {
                block = block.mul(schedule.matrix_at(m + t).as_square());
                sum.add_assign(&block);
                if gi < grid.len() && grid[gi] == t {
                    let avg = sum.scale(T::one() / T::of_usize(t));
                    values.push(matrix_norm(&avg.sub(r)));
                    gi += 1;
                }
            }
            values
        })
        .collect();
    // merge over m by max: order-independent
    let points = grid
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let v = per_m
                .iter()
                .map(|vals| vals[idx])
                .fold(T::zero(), T::max);
            (n, v)
        })
        .collect();
    DiagnosticCurve {
        label: CurveLabel::CesaroEq3,
        points,
    }
}

/// Convergence-of-kernels diagnostic: for each `n = 1..n_max`,
/// `max_{0<=m<=m_max} (1/n) sum_{k=1..n} ||P_{k+m} - P||`.
pub fn condition4_diagnostic<T: Scalar>(
    schedule: &TransitionSchedule<T>,
    p: &StochasticMatrix<T>,
    n_max: usize,
    m_max: usize,
) -> DiagnosticCurve<T> {
    let total = n_max + m_max;
    let mut prefix = vec![T::zero(); total + 1];
    for t in 1..=total {
        let gap = matrix_norm(&schedule.matrix_at(t).as_square().sub(p.as_square()));
        prefix[t] = prefix[t - 1] + gap;
    }
    let points = (1..=n_max)
        .map(|n| {
            let v = (0..=m_max)
                .map(|m| (prefix[n + m] - prefix[m]) / T::of_usize(n))
                .fold(T::zero(), T::max);
            (n, v)
        })
        .collect();
    DiagnosticCurve {
        label: CurveLabel::Cond4,
        points,
    }
}

/// Dobrushin-sum diagnostic: `n -> (sum_{k=1..n} delta(P_k)) / sqrt(n)`.
pub fn condition6_diagnostic<T: Scalar>(
    schedule: &TransitionSchedule<T>,
    n_max: usize,
) -> DiagnosticCurve<T> {
    let mut acc = T::zero();
    let points = (1..=n_max)
        .map(|n| {
            acc = acc + dobrushin_delta(&schedule.matrix_at(n));
            (n, acc / T::of_usize(n).sqrt())
        })
        .collect();
    DiagnosticCurve {
        label: CurveLabel::Cond6,
        points,
    }
}
