//! A laboratory for stochastic approximation with Markovian noise.
//!
//! The crate simulates the recursion
//! `theta_{n+1} = theta_n + alpha_{n+1} f(theta_n, Phi_{n+1})` driven by a
//! finite Markov chain with power-law step-sizes `alpha_n = alpha0 n^{-rho}`,
//! computes the exact asymptotic bias and covariance of Polyak-Ruppert
//! averaged linear recursions, verifies the Metivier-Priouret noise
//! decomposition pathwise, and cross-checks theory against seeded Monte
//! Carlo ensembles.
//!
//! Modules:
//! - [`markov`]: finite chains, stationary distributions, Poisson solver,
//!   CLT covariance.
//! - [`stepsize`]: power-law schedules and their partial-sum functionals.
//! - [`engine`]: the recursion itself plus streaming PR averaging and the
//!   noise-free Euler companion.
//! - [`linear`]: linear models `f(theta, x) = A(x) theta - b(x)` and exact
//!   evaluation of their asymptotic statistics.
//! - [`decomp`]: pathwise noise-decomposition diagnostics.
//! - [`harness`]: ensembles, comparison tables, rate fits, CSV/SVG output.

pub mod decomp;
pub mod engine;
pub mod harness;
pub mod linear;
pub mod markov;
pub mod serde_util;
pub mod stepsize;

pub use decomp::{decompose_path, hat_f, upsilon_linear, DecompositionTerms};
pub use engine::{noise_free_euler, run_sa, PrAverager, RecordSpec, SARunConfig, ThetaInit};
pub use harness::{compare_theory, rate_checks, reproduce, run_ensemble, ExperimentConfig};
pub use linear::{
    ad_bias_envelope, finite_time_bound, FiniteTimeBoundParams, LinearSAModel, TheoryStats,
};
pub use markov::{FiniteMarkovChain, PathInit, StateMatrixTable, StateVectorTable};
pub use stepsize::StepSizeSchedule;
