//! Linear SA models over finite chains and exact evaluation of their
//! asymptotic statistics: the steady-state bias source Upsilon-bar, the
//! asymptotic bias vector beta, the martingale covariance Sigma_W, the
//! optimal PR covariance Sigma^PR, bias predictions, the additive-noise
//! bias envelope and the competing finite-time MSE bound.

use crate::markov::{FiniteMarkovChain, MarkovError, StateMatrixTable, StateVectorTable};
use crate::stepsize::{StepSizeError, StepSizeSchedule};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

/// Eigenvalues of A* must have real part below this for admission.
pub const HURWITZ_TOL: f64 = -1e-9;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("A* is not Hurwitz: max real part of spectrum = {0}")]
    NotHurwitz(f64),
    #[error("A* is singular")]
    SingularAstar,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    StepSize(#[from] StepSizeError),
}

/// Linear SA model f(theta, x) = A(x) theta - b(x) over a finite chain,
/// with derived stationary means and target theta*.
#[derive(Debug, Clone)]
pub struct LinearSAModel {
    chain: FiniteMarkovChain,
    a: StateMatrixTable,
    b: StateVectorTable,
    astar: DMatrix<f64>,
    bbar: DVector<f64>,
    thetastar: DVector<f64>,
    /// G = [A*]^{-1}.
    g: DMatrix<f64>,
}

impl LinearSAModel {
    pub fn new(
        chain: FiniteMarkovChain,
        a: StateMatrixTable,
        b: StateVectorTable,
    ) -> Result<Self, LinearError> {
        let n = chain.n_states();
        if a.n_states() != n || b.n_states() != n {
            return Err(MarkovError::DimensionMismatch(format!(
                "tables sized for {} / {} states, chain has {n}",
                a.n_states(),
                b.n_states()
            ))
            .into());
        }
        let (r, c) = a.shape();
        let d = b.dim();
        if r != c || r != d {
            return Err(
                MarkovError::DimensionMismatch(format!("A is {r}x{c}, b is length {d}")).into(),
            );
        }
        let astar = a.pi_mean(&chain);
        let bbar = b.pi_mean(&chain);

        let max_re = astar
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_re >= HURWITZ_TOL {
            return Err(LinearError::NotHurwitz(max_re));
        }
        let g = astar
            .clone()
            .try_inverse()
            .ok_or(LinearError::SingularAstar)?;
        let thetastar = &g * &bbar;
        debug_assert!((&astar * &thetastar - &bbar).amax() <= 1e-10);
        Ok(Self {
            chain,
            a,
            b,
            astar,
            bbar,
            thetastar,
            g,
        })
    }

    /// The two-state experimental model: A0 = 2[[-2,0],[1,-2]], b0 = 0,
    /// A1 = 2[[1,0],[-1,1]], b1 = -2(1,1), giving A* = -I and theta* = (1,1).
    pub fn two_state_benchmark(a: f64) -> Result<Self, LinearError> {
        let chain = FiniteMarkovChain::two_state(a)?;
        let a_table = StateMatrixTable::new(vec![
            DMatrix::from_row_slice(2, 2, &[-4.0, 0.0, 2.0, -4.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -2.0, 2.0]),
        ])?;
        let b_table = StateVectorTable::from_rows(&[vec![0.0, 0.0], vec![-2.0, -2.0]])?;
        Self::new(chain, a_table, b_table)
    }

    /// Additive-noise variant of the benchmark: the slope is pinned to A* so
    /// only the forcing vector fluctuates with the state.
    pub fn two_state_benchmark_additive(a: f64) -> Result<Self, LinearError> {
        let chain = FiniteMarkovChain::two_state(a)?;
        let astar = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let a_table = StateMatrixTable::new(vec![astar.clone(), astar])?;
        let b_table = StateVectorTable::from_rows(&[vec![0.0, 0.0], vec![-2.0, -2.0]])?;
        Self::new(chain, a_table, b_table)
    }

    pub fn chain(&self) -> &FiniteMarkovChain {
        &self.chain
    }

    pub fn a_table(&self) -> &StateMatrixTable {
        &self.a
    }

    pub fn b_table(&self) -> &StateVectorTable {
        &self.b
    }

    pub fn astar(&self) -> &DMatrix<f64> {
        &self.astar
    }

    pub fn bbar(&self) -> &DVector<f64> {
        &self.bbar
    }

    pub fn thetastar(&self) -> &DVector<f64> {
        &self.thetastar
    }

    /// G = [A*]^{-1}.
    pub fn astar_inv(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.thetastar.len()
    }

    /// True when A(x) is state-independent (additive noise).
    pub fn is_additive(&self) -> bool {
        (1..self.a.n_states()).all(|x| (self.a.get(x) - self.a.get(0)).amax() == 0.0)
    }

    /// f(theta, x) = A(x) theta - b(x), written into `buf` without allocating.
    #[inline]
    pub fn update_into(&self, theta: &DVector<f64>, x: usize, buf: &mut DVector<f64>) {
        buf.gemv(1.0, self.a.get(x), theta, 0.0);
        buf.axpy(-1.0, self.b.get(x), 1.0);
    }

    /// Allocating convenience form of `update_into`.
    pub fn update(&self, theta: &DVector<f64>, x: usize) -> DVector<f64> {
        let mut buf = DVector::zeros(self.dim());
        self.update_into(theta, x, &mut buf);
        buf
    }

    /// Closure suitable for `engine::run_sa`.
    pub fn update_fn(&self) -> impl Fn(&DVector<f64>, usize, &mut DVector<f64>) + '_ {
        move |theta, x, buf| self.update_into(theta, x, buf)
    }

    /// fbar(theta) = A* theta - bbar.
    pub fn mean_field(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.astar * theta - &self.bbar
    }

    /// The forcing table g(x) = f(theta*, x) = A(x) theta* - b(x); its
    /// stationary mean is zero.
    pub fn noise_at_target(&self) -> StateVectorTable {
        let vecs = (0..self.chain.n_states())
            .map(|x| self.update(&self.thetastar, x))
            .collect();
        StateVectorTable::new(vecs).expect("finite by construction")
    }

    /// Steady-state mean of the parameter coupling term evaluated at theta*:
    /// Upsilon-bar = -sum_x pi(x) sum_y P(x,y) A_hat(y) (A(x) theta* - b(x)),
    /// with A_hat the zero-mean Poisson solution for the A-table. Exact
    /// double sum, no sampling.
    pub fn theory_upsilon_star(&self) -> Result<DVector<f64>, LinearError> {
        let a_hat = self.chain.poisson_solve_matrix(&self.a)?;
        let n = self.chain.n_states();
        let p = self.chain.transition_matrix();
        let pi = self.chain.stationary();
        let mut acc = DVector::zeros(self.dim());
        for x in 0..n {
            let fx = self.update(&self.thetastar, x);
            for y in 0..n {
                acc.axpy(-pi[x] * p[(x, y)], &(a_hat.get(y) * &fx), 1.0);
            }
        }
        Ok(acc)
    }

    /// beta = (1-rho)^{-1} [A*]^{-1} Upsilon-bar.
    pub fn theory_beta(&self, schedule: &StepSizeSchedule) -> Result<DVector<f64>, LinearError> {
        let upsilon = self.theory_upsilon_star()?;
        Ok((1.0 / (1.0 - schedule.rho())) * (&self.g * upsilon))
    }

    /// (Sigma_W, Sigma^PR, sigma^PR): the asymptotic covariance of the
    /// parameter-independent martingale noise, its G-conjugation, and the
    /// scalar sqrt-trace. Cross-checked internally against the martingale
    /// reduction E[f_hat f_hat^T] - E[(P f_hat)(P f_hat)^T].
    pub fn theory_sigma_pr(&self) -> Result<SigmaPr, LinearError> {
        let g_table = self.noise_at_target();
        let sigma_w = self.chain.clt_covariance(&g_table)?;

        // MDS reduction of the same covariance.
        let f_hat = self.chain.poisson_solve_vector(&g_table)?;
        let pf_hat = self.chain.apply_kernel_vector(&f_hat)?;
        let pi = self.chain.stationary();
        let mut mds = DMatrix::zeros(self.dim(), self.dim());
        for x in 0..self.chain.n_states() {
            mds += pi[x]
                * (f_hat.get(x) * f_hat.get(x).transpose()
                    - pf_hat.get(x) * pf_hat.get(x).transpose());
        }
        let gap = (&sigma_w - &mds).amax();
        assert!(
            gap <= 1e-10 * (1.0 + sigma_w.amax()),
            "martingale reduction disagrees with CLT covariance: {gap}"
        );

        let sigma_pr = &self.g * &sigma_w * self.g.transpose();
        let sigma_pr_scalar = sigma_pr.trace().max(0.0).sqrt();
        Ok(SigmaPr {
            sigma_w,
            sigma_pr,
            sigma_pr_scalar,
        })
    }

    /// All asymptotic predictions for a given step exponent.
    pub fn theory_stats(&self, schedule: &StepSizeSchedule) -> Result<TheoryStats, LinearError> {
        let upsilon_bar_star = self.theory_upsilon_star()?;
        let beta_theta = (1.0 / (1.0 - schedule.rho())) * (&self.g * &upsilon_bar_star);
        let SigmaPr {
            sigma_w,
            sigma_pr,
            sigma_pr_scalar,
        } = self.theory_sigma_pr()?;
        Ok(TheoryStats {
            upsilon_bar_star,
            beta_theta,
            sigma_wstar: sigma_w,
            sigma_pr,
            sigma_pr_scalar,
            rho: schedule.rho(),
        })
    }

    /// Leading bias term of the PR estimate at horizon N: alpha_{N+1} beta.
    pub fn bias_predict(
        &self,
        schedule: &StepSizeSchedule,
        n: u64,
    ) -> Result<DVector<f64>, LinearError> {
        if n < 1 {
            return Err(LinearError::DomainError(format!(
                "bias_predict: n = {n} must be >= 1"
            )));
        }
        Ok(schedule.alpha(n + 1)? * self.theory_beta(schedule)?)
    }
}

#[derive(Debug, Clone)]
pub struct SigmaPr {
    pub sigma_w: DMatrix<f64>,
    pub sigma_pr: DMatrix<f64>,
    pub sigma_pr_scalar: f64,
}

/// The model's asymptotic predictions for one step exponent rho.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryStats {
    #[serde(serialize_with = "crate::serde_util::vec_f64")]
    pub upsilon_bar_star: DVector<f64>,
    #[serde(serialize_with = "crate::serde_util::vec_f64")]
    pub beta_theta: DVector<f64>,
    #[serde(serialize_with = "crate::serde_util::mat_f64")]
    pub sigma_wstar: DMatrix<f64>,
    #[serde(serialize_with = "crate::serde_util::mat_f64")]
    pub sigma_pr: DMatrix<f64>,
    pub sigma_pr_scalar: f64,
    pub rho: f64,
}

/// Bias envelope for additive noise: C * exp(-lambda (tau^b_n - tau^b_{n_b})).
pub fn ad_bias_envelope(
    schedule: &StepSizeSchedule,
    n: u64,
    n_b: u64,
    c: f64,
    lambda: f64,
) -> Result<f64, LinearError> {
    if n < n_b || n_b < 1 {
        return Err(LinearError::DomainError(format!(
            "ad_bias_envelope requires n >= n_b >= 1, got n = {n}, n_b = {n_b}"
        )));
    }
    if !(c > 0.0 && lambda > 0.0) {
        return Err(LinearError::DomainError(format!(
            "ad_bias_envelope requires C, lambda > 0, got C = {c}, lambda = {lambda}"
        )));
    }
    Ok(c * (-lambda * (schedule.tau_b(n)? - schedule.tau_b(n_b)?)).exp())
}

/// Constants for the universal finite-time MSE bound
/// K [log(n / alpha0) + 1] alpha_n.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteTimeBoundParams {
    /// Lyapunov drift constant.
    pub c0: f64,
    /// Uniform-ergodicity prefactor.
    pub r: f64,
    /// Uniform-ergodicity rate, in (0,1).
    pub varrho: f64,
    /// Lipschitz constant of the mean field.
    pub l_fbar: f64,
    /// Martingale-noise scale.
    pub sigma_w0: f64,
    pub alpha0: f64,
    /// Norm of the target parameter, entering the constant L.
    pub theta_star_norm: f64,
}

impl FiniteTimeBoundParams {
    fn validate(&self) -> Result<(), LinearError> {
        if !(self.varrho > 0.0 && self.varrho < 1.0) {
            return Err(LinearError::DomainError(format!(
                "varrho = {} must lie in (0,1)",
                self.varrho
            )));
        }
        for (name, v) in [
            ("c0", self.c0),
            ("r", self.r),
            ("l_fbar", self.l_fbar),
            ("alpha0", self.alpha0),
        ] {
            if !(v > 0.0) {
                return Err(LinearError::DomainError(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// L = 520 (L_fbar + sigma_w0^2)^2 alpha0 (||theta*|| + 1)^2.
    pub fn constant_l(&self) -> f64 {
        520.0
            * (self.l_fbar + self.sigma_w0 * self.sigma_w0).powi(2)
            * self.alpha0
            * (self.theta_star_norm + 1.0).powi(2)
    }

    /// K = L / c0 * max{1, log(R / varrho) / log(1 / varrho)}.
    pub fn constant_k(&self) -> Result<f64, LinearError> {
        self.validate()?;
        let mixing = ((self.r / self.varrho).ln() / (1.0 / self.varrho).ln()).max(1.0);
        Ok(self.constant_l() / self.c0 * mixing)
    }

    /// Constants used for the two-state benchmark: c0 = 1, R = 1/2,
    /// varrho = 2a - 1, L_fbar = 1, sigma_w0 = 0.
    pub fn two_state_benchmark(a: f64, alpha0: f64) -> Result<Self, LinearError> {
        let model = LinearSAModel::two_state_benchmark(a)?;
        let params = Self {
            c0: 1.0,
            r: 0.5,
            varrho: 2.0 * a - 1.0,
            l_fbar: 1.0,
            sigma_w0: 0.0,
            alpha0,
            theta_star_norm: model.thetastar().norm(),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Leading term of the universal finite-time MSE bound at iterate n. The
/// quickly vanishing remainder of the published bound is excluded.
pub fn finite_time_bound(
    params: &FiniteTimeBoundParams,
    schedule: &StepSizeSchedule,
    n: u64,
) -> Result<f64, LinearError> {
    if n < 1 {
        return Err(LinearError::DomainError(format!(
            "finite_time_bound: n = {n} must be >= 1"
        )));
    }
    let k = params.constant_k()?;
    Ok(k * ((n as f64 / params.alpha0).ln() + 1.0) * schedule.alpha(n)?)
}
