//! Finite-state Markov chains: validation, stationary distribution, seeded
//! path sampling, Poisson-equation solutions and CLT asymptotic covariance
//! of chain functionals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Input row sums may deviate from 1 by this much; rows are renormalized
/// exactly on admission.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Post-admission stationarity residual allowed for `pi`.
pub const STATIONARY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("matrix is not row-stochastic: {0}")]
    NonStochastic(String),
    #[error("chain is reducible or degenerate: {0}")]
    ReducibleOrDegenerate(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// How the initial state of a sampled path is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathInit {
    /// Draw the initial state from the stationary distribution.
    Stationary,
    /// Start from the given state.
    Fixed(usize),
}

/// An irreducible finite Markov chain with cached stationary distribution
/// and fundamental matrix. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FiniteMarkovChain {
    p: DMatrix<f64>,
    pi: DVector<f64>,
    /// Z = (I - P + 1 pi^T)^{-1}, certified invertible at construction.
    fundamental: DMatrix<f64>,
    /// Row-wise cumulative sums of P, used for inverse-CDF sampling.
    row_cdf: Vec<Vec<f64>>,
    /// Cumulative sums of pi.
    pi_cdf: Vec<f64>,
}

impl FiniteMarkovChain {
    /// Admits a row-stochastic transition matrix, computing the stationary
    /// distribution by an exact augmented linear solve and certifying the
    /// fundamental matrix.
    pub fn new(p: DMatrix<f64>) -> Result<Self, MarkovError> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(MarkovError::NonStochastic(format!(
                "expected a nonempty square matrix, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        let mut p = p;
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = p[(i, j)];
                if !v.is_finite() || v < 0.0 || v > 1.0 + ROW_SUM_TOL {
                    return Err(MarkovError::NonStochastic(format!(
                        "entry ({i},{j}) = {v} outside [0,1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MarkovError::NonStochastic(format!("row {i} sums to {sum}")));
            }
            // Exact row sums after admission.
            for j in 0..n {
                p[(i, j)] /= sum;
            }
        }

        // Solve pi^T (I - P + 1 1^T / n) = (1/n) 1^T, i.e. the transposed
        // system (I - P^T + J/n) pi = (1/n) 1.
        let nf = n as f64;
        let mut aug = DMatrix::<f64>::identity(n, n) - p.transpose();
        aug.add_scalar_mut(1.0 / nf);
        let rhs = DVector::from_element(n, 1.0 / nf);
        let pi = aug.lu().solve(&rhs).ok_or_else(|| {
            MarkovError::ReducibleOrDegenerate("stationary solve singular".into())
        })?;

        if pi.iter().any(|&x| x < -1e-12) {
            return Err(MarkovError::ReducibleOrDegenerate(
                "stationary vector has negative entries".into(),
            ));
        }
        let pi_sum: f64 = pi.iter().sum();
        if (pi_sum - 1.0).abs() > 1e-12 {
            return Err(MarkovError::ReducibleOrDegenerate(format!(
                "stationary vector sums to {pi_sum}"
            )));
        }
        let residual = (p.transpose() * &pi - &pi).amax();
        if residual > STATIONARY_TOL {
            return Err(MarkovError::ReducibleOrDegenerate(format!(
                "stationarity residual {residual}"
            )));
        }

        // Fundamental matrix Z = (I - P + 1 pi^T)^{-1}.
        let mut m = DMatrix::<f64>::identity(n, n) - &p;
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += pi[j];
            }
        }
        let fundamental = m.try_inverse().ok_or_else(|| {
            MarkovError::ReducibleOrDegenerate("fundamental matrix singular".into())
        })?;

        let row_cdf = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                (0..n)
                    .map(|j| {
                        acc += p[(i, j)];
                        acc
                    })
                    .collect()
            })
            .collect();
        let mut acc = 0.0;
        let pi_cdf = pi
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();

        Ok(Self {
            p,
            pi,
            fundamental,
            row_cdf,
            pi_cdf,
        })
    }

    /// The reversible two-state chain P = [[a, 1-a], [1-a, a]] with uniform
    /// stationary distribution; its second eigenvalue is 2a - 1.
    pub fn two_state(a: f64) -> Result<Self, MarkovError> {
        if !(a > 0.0 && a < 1.0) {
            return Err(MarkovError::DomainError(format!(
                "two_state parameter a = {a} must lie in (0,1)"
            )));
        }
        Self::new(DMatrix::from_row_slice(2, 2, &[a, 1.0 - a, 1.0 - a, a]))
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.pi
    }

    /// Z = (I - P + 1 pi^T)^{-1}.
    pub fn fundamental_matrix(&self) -> &DMatrix<f64> {
        &self.fundamental
    }

    /// Modulus of the second-largest eigenvalue of P.
    pub fn lambda2_modulus(&self) -> f64 {
        let eigs = self.p.complex_eigenvalues();
        let mut mods: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if mods.len() > 1 {
            mods[1]
        } else {
            0.0
        }
    }

    /// Inverse-CDF draw of the successor of `x`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let cdf = &self.row_cdf[x];
        // Last entry is exactly 1 after renormalization; u < 1.
        cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
    }

    /// Inverse-CDF draw from the stationary distribution.
    #[inline]
    pub fn stationary_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.pi_cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.pi_cdf.len() - 1)
    }

    /// Draws the initial state according to `init`.
    pub fn initial_state<R: Rng + ?Sized>(
        &self,
        init: PathInit,
        rng: &mut R,
    ) -> Result<usize, MarkovError> {
        match init {
            PathInit::Stationary => Ok(self.stationary_draw(rng)),
            PathInit::Fixed(x) => {
                if x >= self.n_states() {
                    Err(MarkovError::DomainError(format!(
                        "initial state {x} out of range (n = {})",
                        self.n_states()
                    )))
                } else {
                    Ok(x)
                }
            }
        }
    }

    /// Samples Phi_0..Phi_{n_steps}, deterministic given (seed, init).
    pub fn sample_path(
        &self,
        n_steps: usize,
        seed: u64,
        init: PathInit,
    ) -> Result<Vec<usize>, MarkovError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut path = Vec::with_capacity(n_steps + 1);
        let mut x = self.initial_state(init, &mut rng)?;
        path.push(x);
        for _ in 0..n_steps {
            x = self.step(x, &mut rng);
            path.push(x);
        }
        Ok(path)
    }

    /// Zero-mean solution of Poisson's equation with vector forcing:
    /// g_hat = Z (g - pi(g)), satisfying (P g_hat)(x) = g_hat(x) - g(x) + pi(g).
    pub fn poisson_solve_vector(
        &self,
        g: &StateVectorTable,
    ) -> Result<StateVectorTable, MarkovError> {
        self.check_states(g.n_states())?;
        let n = self.n_states();
        let d = g.dim();
        // Stack as n x d, rows g(x)^T.
        let mut stacked = DMatrix::<f64>::zeros(n, d);
        for x in 0..n {
            stacked.row_mut(x).copy_from(&g.get(x).transpose());
        }
        let mean = self.pi.transpose() * &stacked; // 1 x d
        for x in 0..n {
            let mut row = stacked.row_mut(x);
            row -= &mean;
        }
        let solved = &self.fundamental * stacked;
        let vecs = (0..n).map(|x| solved.row(x).transpose()).collect();
        StateVectorTable::new(vecs)
    }

    /// Entrywise extension of `poisson_solve_vector` to matrix forcing.
    pub fn poisson_solve_matrix(
        &self,
        m: &StateMatrixTable,
    ) -> Result<StateMatrixTable, MarkovError> {
        self.check_states(m.n_states())?;
        let n = self.n_states();
        let (r, c) = m.shape();
        let mut mats = vec![DMatrix::<f64>::zeros(r, c); n];
        // Poisson's equation is linear, so solve column by column.
        for j in 0..c {
            let cols: Vec<DVector<f64>> = (0..n).map(|x| m.get(x).column(j).into()).collect();
            let table = StateVectorTable::new(cols)?;
            let solved = self.poisson_solve_vector(&table)?;
            for x in 0..n {
                mats[x].set_column(j, solved.get(x));
            }
        }
        StateMatrixTable::new(mats)
    }

    /// Asymptotic covariance of the CLT for the chain functional `g`:
    /// Sigma = E_pi[g_hat g_tilde^T + g_tilde g_hat^T - g_tilde g_tilde^T],
    /// symmetrized.
    pub fn clt_covariance(&self, g: &StateVectorTable) -> Result<DMatrix<f64>, MarkovError> {
        let g_hat = self.poisson_solve_vector(g)?;
        let d = g.dim();
        let mean = g.pi_mean(self);
        let mut sigma = DMatrix::<f64>::zeros(d, d);
        for x in 0..self.n_states() {
            let gt = g.get(x) - &mean;
            let gh = g_hat.get(x);
            let w = self.pi[x];
            sigma += w * (gh * gt.transpose() + &gt * gh.transpose() - &gt * gt.transpose());
        }
        Ok(0.5 * (&sigma + sigma.transpose()))
    }

    /// E[g_hat(Phi_{k+1}) | Phi_k = x] for every x, stacked as a table.
    pub fn apply_kernel_vector(
        &self,
        g: &StateVectorTable,
    ) -> Result<StateVectorTable, MarkovError> {
        self.check_states(g.n_states())?;
        let n = self.n_states();
        let vecs = (0..n)
            .map(|x| {
                let mut acc = DVector::zeros(g.dim());
                for y in 0..n {
                    acc.axpy(self.p[(x, y)], g.get(y), 1.0);
                }
                acc
            })
            .collect();
        StateVectorTable::new(vecs)
    }

    fn check_states(&self, table_states: usize) -> Result<(), MarkovError> {
        if table_states != self.n_states() {
            return Err(MarkovError::DimensionMismatch(format!(
                "table has {} states, chain has {}",
                table_states,
                self.n_states()
            )));
        }
        Ok(())
    }
}

/// Per-state vectors g(x) in R^d, uniform dimension, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVectorTable {
    vecs: Vec<DVector<f64>>,
}

impl StateVectorTable {
    pub fn new(vecs: Vec<DVector<f64>>) -> Result<Self, MarkovError> {
        if vecs.is_empty() {
            return Err(MarkovError::DimensionMismatch("empty table".into()));
        }
        let d = vecs[0].len();
        for (x, v) in vecs.iter().enumerate() {
            if v.len() != d {
                return Err(MarkovError::DimensionMismatch(format!(
                    "state {x} has dimension {} expected {d}",
                    v.len()
                )));
            }
            if v.iter().any(|e| !e.is_finite()) {
                return Err(MarkovError::DomainError(format!(
                    "state {x} has non-finite entries"
                )));
            }
        }
        Ok(Self { vecs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MarkovError> {
        Self::new(rows.iter().map(|r| DVector::from_row_slice(r)).collect())
    }

    /// Scalar forcing function as d = 1 table.
    pub fn scalar(values: &[f64]) -> Result<Self, MarkovError> {
        Self::new(
            values
                .iter()
                .map(|&v| DVector::from_element(1, v))
                .collect(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.vecs.len()
    }

    pub fn dim(&self) -> usize {
        self.vecs[0].len()
    }

    #[inline]
    pub fn get(&self, x: usize) -> &DVector<f64> {
        &self.vecs[x]
    }

    /// pi(g) = sum_x pi(x) g(x).
    pub fn pi_mean(&self, chain: &FiniteMarkovChain) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for x in 0..self.n_states() {
            acc.axpy(chain.stationary()[x], &self.vecs[x], 1.0);
        }
        acc
    }
}

/// Per-state matrices M(x) in R^{r x c}, uniform shape, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrixTable {
    mats: Vec<DMatrix<f64>>,
}

impl StateMatrixTable {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self, MarkovError> {
        if mats.is_empty() {
            return Err(MarkovError::DimensionMismatch("empty table".into()));
        }
        let shape = mats[0].shape();
        for (x, m) in mats.iter().enumerate() {
            if m.shape() != shape {
                return Err(MarkovError::DimensionMismatch(format!(
                    "state {x} has shape {:?} expected {:?}",
                    m.shape(),
                    shape
                )));
            }
            if m.iter().any(|e| !e.is_finite()) {
                return Err(MarkovError::DomainError(format!(
                    "state {x} has non-finite entries"
                )));
            }
        }
        Ok(Self { mats })
    }

    pub fn n_states(&self) -> usize {
        self.mats.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mats[0].shape()
    }

    #[inline]
    pub fn get(&self, x: usize) -> &DMatrix<f64> {
        &self.mats[x]
    }

    /// pi(M) = sum_x pi(x) M(x).
    pub fn pi_mean(&self, chain: &FiniteMarkovChain) -> DMatrix<f64> {
        let (r, c) = self.shape();
        let mut acc = DMatrix::zeros(r, c);
        for x in 0..self.n_states() {
            acc += chain.stationary()[x] * &self.mats[x];
        }
        acc
    }
}
