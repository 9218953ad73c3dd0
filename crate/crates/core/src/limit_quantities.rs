//! Limit-theorem quantities: the per-step variance `theta`, the moderate
//! deviation rate function, the martingale decomposition of the centered
//! partial sums, drift bounds, and the exact small-instance enumeration
//! oracle that grounds the Monte Carlo estimators.

use serde::Serialize;
use thiserror::Error;

use crate::chain_model::{ChainSpec, Observable, Path, StochasticMatrix};
use crate::ergodic_analysis::{dobrushin_delta, CurveLabel, DiagnosticCurve};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LimitError {
    #[error("theta = {theta} must be positive")]
    NonpositiveTheta { theta: f64 },
    #[error("path/spec dimensions disagree: {reason}")]
    LengthMismatch { reason: &'static str },
    #[error("empty input")]
    EmptyInput,
    #[error("variance normalizer {v_n} must be positive")]
    NonpositiveVariance { v_n: f64 },
    #[error("instance too large: K^(n+1) = {size:.3e} exceeds {limit:.1e}")]
    InstanceTooLarge { size: f64, limit: f64 },
}

/// Per-path martingale decomposition: differences `D_k`, the martingale
/// `W_k`, and its predictable variation `V(W_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleTrace<T> {
    /// `D_k = f(X_k) - E[f(X_k) | X_{k-1}]`, `k = 1..n`.
    pub d_values: Vec<T>,
    /// `W_k = sum_{j<=k} D_j`.
    pub w_values: Vec<T>,
    /// `V(W_k) = sum_{j<=k} E[D_j^2 | X_{j-1}]`; non-decreasing.
    pub v_values: Vec<T>,
}

impl<T: Scalar> MartingaleTrace<T> {
    pub fn len(&self) -> usize {
        self.d_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_values.is_empty()
    }

    pub fn final_w(&self) -> T {
        self.w_values.last().copied().unwrap_or_else(T::zero)
    }

    pub fn final_v(&self) -> T {
        self.v_values.last().copied().unwrap_or_else(T::zero)
    }
}

/// Exact law of the additive functional `S_n` on a small instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactDistribution<T> {
    /// Distinct values of `S_n`, increasing.
    pub support: Vec<T>,
    /// Matching probabilities, each positive.
    pub probabilities: Vec<T>,
    pub mean: T,
    pub variance: T,
}

/// Per-step drift bound audit plus the cumulative bound curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftBoundReport<T> {
    /// `(k, sum_{j<=k} 2 M delta(P_j) / sqrt(k))`.
    pub curve: DiagnosticCurve<T>,
    /// Count of steps where the realized drift exceeded its bound by more
    /// than 1e-12. Always zero; the bound is a theorem.
    pub violations: usize,
    /// Largest value of `realized - bound` seen (normally negative).
    pub max_excess: T,
}

/// Limit variance `theta = sum_i pi(i) [ f(i)^2 - (sum_j f(j) p(i,j))^2 ]`.
///
/// No sign restriction is enforced here; the CLT and MDP drivers reject
/// nonpositive values where positivity is actually assumed.
pub fn theta<T: Scalar>(p: &StochasticMatrix<T>, pi: &[T], f: &Observable<T>) -> T {
    let vals = f.values();
    let mut acc = T::zero();
    for (i, &w) in pi.iter().enumerate() {
        let row_mean = p.row_dot(i, vals);
        acc = acc + w * (vals[i] * vals[i] - row_mean * row_mean);
    }
    acc
}

/// Moderate deviation rate function `I(x) = x^2 / (2 theta)`.
pub fn rate_function<T: Scalar>(x: T, theta: T) -> Result<T, LimitError> {
    if theta <= T::zero() {
        return Err(LimitError::NonpositiveTheta {
            theta: theta.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(x * x / (T::of_f64(2.0) * theta))
}

/// Decomposes a realized path into its martingale pieces with respect to
/// the chain's own one-step kernels.
pub fn martingale_decompose<T: Scalar>(
    path: &Path,
    spec: &ChainSpec<T>,
    f: &Observable<T>,
) -> Result<MartingaleTrace<T>, LimitError> {
    let k_states = spec.space().size();
    if f.len() != k_states {
        return Err(LimitError::LengthMismatch {
            reason: "observable length differs from state count",
        });
    }
    if path.states.is_empty() {
        return Err(LimitError::LengthMismatch {
            reason: "path has no states",
        });
    }
    if path.states.iter().any(|&s| s < 1 || s as usize > k_states) {
        return Err(LimitError::LengthMismatch {
            reason: "path state out of range for the spec",
        });
    }
    let n = path.steps();
    let vals = f.values();
    let mut row = vec![T::zero(); k_states];
    let mut d_values = Vec::with_capacity(n);
    let mut w_values = Vec::with_capacity(n);
    let mut v_values = Vec::with_capacity(n);
    let mut w = T::zero();
    let mut v = T::zero();
    for k in 1..=n {
        let prev = path.states[k - 1] as usize - 1;
        spec.schedule().row_at(k, prev, &mut row);
        let mut mean = T::zero();
        let mut msq = T::zero();
        for (j, &pj) in row.iter().enumerate() {
            mean = mean + pj * vals[j];
            msq = msq + pj * vals[j] * vals[j];
        }
        let d = f.at(path.states[k]) - mean;
        w = w + d;
        // conditional variance; clamp rounding dust so V stays monotone
        v = v + (msq - mean * mean).max(T::zero());
        d_values.push(d);
        w_values.push(w);
        v_values.push(v);
    }
    Ok(MartingaleTrace {
        d_values,
        w_values,
        v_values,
    })
}

/// Monte Carlo Lindeberg diagnostic:
/// `(1/v_n) * mean over traces of sum_j D_j^2 1{|D_j| >= eps sqrt(v_n)}`.
pub fn lindeberg_diagnostic<T: Scalar>(
    traces: &[MartingaleTrace<T>],
    epsilon: T,
    v_n: T,
) -> Result<T, LimitError> {
    if traces.is_empty() {
        return Err(LimitError::EmptyInput);
    }
    if v_n <= T::zero() {
        return Err(LimitError::NonpositiveVariance {
            v_n: v_n.to_f64().unwrap_or(f64::NAN),
        });
    }
    let thresh = epsilon * v_n.sqrt();
    let mut acc = T::zero();
    for trace in traces {
        let mut inner = T::zero();
        for &d in &trace.d_values {
            if d.abs() >= thresh {
                inner = inner + d * d;
            }
        }
        acc = acc + inner;
    }
    Ok(acc / (T::of_usize(traces.len()) * v_n))
}

/// Audits the per-step drift bound: for every `k <= n` the worst-case
/// realized conditional-mean drift
/// `max_i |sum_j p_k(i,j) f(j) - sum_j mu^(k)(j) f(j)|`
/// must stay below `2 M delta(P_k)`. Returns the cumulative bound curve
/// `(k, sum_{j<=k} 2 M delta(P_j) / sqrt(k))` together with the audit.
pub fn drift_bound_check<T: Scalar>(
    spec: &ChainSpec<T>,
    f: &Observable<T>,
    n: usize,
) -> DriftBoundReport<T> {
    let vals = f.values();
    let two_m = T::of_f64(2.0) * f.bound();
    let mut mu = spec.initial().clone();
    let mut bound_sum = T::zero();
    let mut points = Vec::with_capacity(n);
    let mut violations = 0usize;
    let mut max_excess = T::neg_infinity();
    let fp_slack = T::of_f64(1e-12);
    for k in 1..=n {
        let p_k = spec.schedule().matrix_at(k);
        mu = mu.step(&p_k);
        let e_fk = mu.dot(vals);
        let mut realized = T::zero();
        for i in 0..p_k.dim() {
            let drift = (p_k.row_dot(i, vals) - e_fk).abs();
            if drift > realized {
                realized = drift;
            }
        }
        let bound = two_m * dobrushin_delta(&p_k);
        let excess = realized - bound;
        if excess > max_excess {
            max_excess = excess;
        }
        if excess > fp_slack {
            violations += 1;
        }
        bound_sum = bound_sum + bound;
        points.push((k, bound_sum / T::of_usize(k).sqrt()));
    }
    DriftBoundReport {
        curve: DiagnosticCurve {
            label: CurveLabel::DriftBound,
            points,
        },
        violations,
        max_excess,
    }
}

const ENUMERATION_LIMIT: f64 = 1e8;

/// Exact law of `S_n = sum_{k=1..n} f(X_k)` by dynamic programming over
/// (step, state, accumulated sum).
///
/// Sums are bucketed exactly when the observable's values sit on a common
/// lattice (integer multiples of a detected quantum, tolerance 1e-9);
/// otherwise the instance is enumerated path by path. Both routes sit
/// behind the `K^(n+1) <= 1e8` guard.
pub fn enumerate_exact<T: Scalar>(
    spec: &ChainSpec<T>,
    f: &Observable<T>,
    n: usize,
) -> Result<ExactDistribution<T>, LimitError> {
    let k_states = spec.space().size();
    if f.len() != k_states {
        return Err(LimitError::LengthMismatch {
            reason: "observable length differs from state count",
        });
    }
    let size = (k_states as f64).powi(n as i32 + 1);
    if size > ENUMERATION_LIMIT {
        return Err(LimitError::InstanceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let atoms = match lattice_coefficients(f.values()) {
        Some((quantum, coeffs)) => lattice_dp(spec, &coeffs, quantum, n),
        None => enumerate_paths(spec, f, n),
    };
    Ok(distribution_from_atoms(atoms))
}

/// Detects a common lattice: returns `(g, c)` with `f_i = c_i * g` exactly
/// within 1e-9, or `None` when the values do not share a usable quantum.
fn lattice_coefficients<T: Scalar>(values: &[T]) -> Option<(T, Vec<i64>)> {
    let tol = T::of_f64(1e-9);
    let mut g = T::zero();
    for &v in values {
        let mut a = g.max(v.abs());
        let mut b = g.min(v.abs());
        // Euclid with tolerance
        while b > tol {
            let r = a % b;
            a = b;
            b = r;
        }
        g = a;
    }
    if g <= tol {
        // all values are (numerically) zero
        return Some((T::one(), vec![0; values.len()]));
    }
    let mut coeffs = Vec::with_capacity(values.len());
    for &v in values {
        let c = (v / g).round();
        if (v - c * g).abs() > tol {
            return None;
        }
        let c = c.to_f64()?;
        if c.abs() > 1e15 {
            return None;
        }
        coeffs.push(c as i64);
    }
    // keep the DP table bounded even for wild coefficient spreads
    let span = coeffs.iter().max()? - coeffs.iter().min()?;
    if span > 1_000_000 {
        return None;
    }
    Some((g, coeffs))
}

fn lattice_dp<T: Scalar>(
    spec: &ChainSpec<T>,
    coeffs: &[i64],
    quantum: T,
    n: usize,
) -> Vec<(T, T)> {
    let k = coeffs.len();
    let cmin = *coeffs.iter().min().expect("nonempty");
    let cmax = *coeffs.iter().max().expect("nonempty");
    let smin = (n as i64 * cmin).min(0);
    let smax = (n as i64 * cmax).max(0);
    let width = (smax - smin + 1) as usize;

    // layer[state * width + (s - smin)] = P(X_step = state, sum = s)
    let mut layer = vec![T::zero(); k * width];
    let zero_idx = (-smin) as usize;
    for (i, &w) in spec.initial().weights().iter().enumerate() {
        layer[i * width + zero_idx] = w;
    }
    let mut next = vec![T::zero(); k * width];
    for step in 1..=n {
        let p = spec.schedule().matrix_at(step);
        for x in next.iter_mut() {
            *x = T::zero();
        }
        for i in 0..k {
            for idx in 0..width {
                let mass = layer[i * width + idx];
                if mass == T::zero() {
                    continue;
                }
                for j in 0..k {
                    let pij = p.get(i, j);
                    if pij == T::zero() {
                        continue;
                    }
                    let nidx = (idx as i64 + coeffs[j]) as usize;
                    next[j * width + nidx] = next[j * width + nidx] + mass * pij;
                }
            }
        }
        std::mem::swap(&mut layer, &mut next);
    }
    let mut atoms = Vec::new();
    for idx in 0..width {
        let mut prob = T::zero();
        for j in 0..k {
            prob = prob + layer[j * width + idx];
        }
        if prob > T::zero() {
            let s = idx as i64 + smin;
            atoms.push((T::of_f64(s as f64) * quantum, prob));
        }
    }
    atoms
}

fn enumerate_paths<T: Scalar>(spec: &ChainSpec<T>, f: &Observable<T>, n: usize) -> Vec<(T, T)> {
    let k = spec.space().size();
    let vals = f.values();
    let mut atoms: Vec<(T, T)> = Vec::new();
    // depth-first over (state, prob, sum) with an explicit stack
    let mut stack: Vec<(usize, usize, T, T)> = Vec::new();
    for (i, &w) in spec.initial().weights().iter().enumerate() {
        if w > T::zero() {
            stack.push((0, i, w, T::zero()));
        }
    }
    while let Some((depth, state, prob, sum)) = stack.pop() {
        if depth == n {
            atoms.push((sum, prob));
            continue;
        }
        let p = spec.schedule().matrix_at(depth + 1);
        for j in 0..k {
            let pij = p.get(state, j);
            if pij > T::zero() {
                stack.push((depth + 1, j, prob * pij, sum + vals[j]));
            }
        }
    }
    merge_atoms(atoms)
}

/// Sorts and merges atoms whose values agree within 1e-12 of the scale.
fn merge_atoms<T: Scalar>(mut atoms: Vec<(T, T)>) -> Vec<(T, T)> {
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sums"));
    let scale = atoms
        .iter()
        .map(|&(v, _)| v.abs())
        .fold(T::one(), T::max);
    let tol = T::of_f64(1e-12) * scale;
    let mut out: Vec<(T, T)> = Vec::new();
    for (v, p) in atoms {
        match out.last_mut() {
            Some((lv, lp)) if (v - *lv).abs() <= tol => *lp = *lp + p,
            _ => out.push((v, p)),
        }
    }
    out
}

fn distribution_from_atoms<T: Scalar>(atoms: Vec<(T, T)>) -> ExactDistribution<T> {
    let mut support = Vec::with_capacity(atoms.len());
    let mut probabilities = Vec::with_capacity(atoms.len());
    let mut mean = T::zero();
    for &(v, p) in &atoms {
        support.push(v);
        probabilities.push(p);
        mean = mean + p * v;
    }
    let mut variance = T::zero();
    for &(v, p) in &atoms {
        variance = variance + p * (v - mean) * (v - mean);
    }
    ExactDistribution {
        support,
        probabilities,
        mean,
        variance,
    }
}
