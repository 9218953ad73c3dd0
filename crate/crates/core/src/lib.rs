//! Nonhomogeneous Markov chain construction, ergodicity analysis, and
//! limit-theorem verification.
//!
//! The crate builds finite-state chains whose one-step transition matrix may
//! change with time, computes the quantities that control their long-run
//! behaviour (Dobrushin coefficients, stationary structure, Cesàro and
//! strong-ergodicity diagnostics, the per-step limit variance `theta`), and
//! verifies the central limit theorem and the moderate deviation principle
//! for bounded additive functionals by exact enumeration at small scale and
//! seeded Monte Carlo at desk scale.
//!
//! Module map:
//! - [`chain_model`] — state spaces, stochastic matrices, transition
//!   schedules, exact marginal computations.
//! - [`ergodic_analysis`] — Dobrushin coefficient, stationary distributions,
//!   period/cyclic classes, ergodicity diagnostic curves.
//! - [`limit_quantities`] — the limit variance `theta`, the moderate
//!   deviation rate function, martingale decomposition, exact enumeration
//!   oracle.
//! - [`monte_carlo`] — reproducible path simulation, CLT and MDP estimators,
//!   Kolmogorov–Smirnov statistic.
//!
//! Core math is generic over the scalar type through [`Scalar`]; the
//! simulation layer is `f64` (its determinism contract is stated in terms of
//! IEEE-754 double precision). Concrete aliases for the common case live at
//! the crate root.

pub mod chain_model;
pub mod ergodic_analysis;
pub mod limit_quantities;
pub mod monte_carlo;
pub mod rng;

mod scalar;

pub use scalar::Scalar;

/// `f64` stochastic matrix.
pub type Matrix64 = chain_model::StochasticMatrix<f64>;
/// `f32` stochastic matrix.
pub type Matrix32 = chain_model::StochasticMatrix<f32>;
/// `f64` general square matrix.
pub type Square64 = chain_model::SquareMatrix<f64>;
/// `f64` transition schedule.
pub type Schedule64 = chain_model::TransitionSchedule<f64>;
/// `f64` chain specification.
pub type ChainSpec64 = chain_model::ChainSpec<f64>;
/// `f64` bounded observable.
pub type Observable64 = chain_model::Observable<f64>;
/// `f64` diagnostic curve.
pub type Curve64 = ergodic_analysis::DiagnosticCurve<f64>;
