//! The general SA recursion theta_{n+1} = theta_n + alpha_{n+1} f(theta_n, Phi_{n+1})
//! with Markovian noise, streaming Polyak-Ruppert averaging with burn-in, and
//! the noise-free Euler companion recursion.

use crate::markov::{FiniteMarkovChain, MarkovError, PathInit};
use crate::stepsize::StepSizeSchedule;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("numerical divergence at iterate {index}")]
    NumericalDivergence { index: u64 },
    #[error("burn-in not reached: queried index {queried} < burn-in {burn_in}")]
    BurnInNotReached { queried: u64, burn_in: u64 },
    #[error("invalid run configuration: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

/// Initial parameter vector. A Gaussian initialization is drawn from the
/// run's own generator, before any chain transitions, so one seed fully
/// determines a run.
#[derive(Debug, Clone)]
pub enum ThetaInit {
    Fixed(DVector<f64>),
    Gaussian { mean: DVector<f64>, cov_scale: f64 },
}

impl ThetaInit {
    pub fn dim(&self) -> usize {
        match self {
            ThetaInit::Fixed(v) => v.len(),
            ThetaInit::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            ThetaInit::Fixed(v) => v.clone(),
            ThetaInit::Gaussian { mean, cov_scale } => {
                let sd = cov_scale.sqrt();
                DVector::from_iterator(
                    mean.len(),
                    mean.iter().map(|&m| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + sd * z
                    }),
                )
            }
        }
    }
}

/// Which iterate indices are stored in the trajectory record. The final
/// index is always stored.
#[derive(Debug, Clone)]
pub enum RecordSpec {
    /// Store every `stride`-th iterate (including index 0).
    Stride(u64),
    /// Store exactly these indices (sorted and deduplicated on use).
    Indices(Vec<u64>),
    /// Store only the final iterate.
    FinalOnly,
}

#[derive(Debug, Clone)]
pub struct SARunConfig {
    pub chain: FiniteMarkovChain,
    pub schedule: StepSizeSchedule,
    /// Horizon N.
    pub n_steps: u64,
    /// Burn-in N0; the PR average runs over theta_{N0}..theta_n inclusive.
    pub burn_in: u64,
    pub theta_init: ThetaInit,
    pub seed: u64,
    pub record: RecordSpec,
    pub path_init: PathInit,
    /// Retain the full state path and unthinned iterates (diagnostics only).
    pub keep_path: bool,
}

impl SARunConfig {
    fn validate(&self) -> Result<(), EngineError> {
        if self.burn_in >= self.n_steps {
            return Err(EngineError::ConfigError(format!(
                "burn_in {} must be < n_steps {}",
                self.burn_in, self.n_steps
            )));
        }
        if let RecordSpec::Stride(0) = self.record {
            return Err(EngineError::ConfigError(
                "record stride must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One stored sample of a run.
#[derive(Debug, Clone)]
pub struct Sample {
    pub n: u64,
    pub theta: DVector<f64>,
    /// PR average theta^PR_n; None for n < burn-in.
    pub pr: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    pub final_theta: DVector<f64>,
    pub final_pr: DVector<f64>,
    /// Phi_0..Phi_N, retained only when keep_path is set.
    pub path: Option<Vec<usize>>,
    /// theta_0..theta_N, retained only when keep_path is set.
    pub full_iterates: Option<Vec<DVector<f64>>>,
    pub n_steps: u64,
    pub burn_in: u64,
}

/// Streaming Polyak-Ruppert averager over the inclusive window
/// theta_{N0}..theta_n.
#[derive(Debug, Clone)]
pub struct PrAverager {
    burn_in: u64,
    sum: DVector<f64>,
    count: u64,
}

impl PrAverager {
    pub fn new(dim: usize, burn_in: u64) -> Self {
        Self {
            burn_in,
            sum: DVector::zeros(dim),
            count: 0,
        }
    }

    /// Feed theta_n; iterates below the burn-in index are ignored.
    pub fn push(&mut self, n: u64, theta: &DVector<f64>) {
        if n >= self.burn_in {
            self.sum += theta;
            self.count += 1;
        }
    }

    /// theta^PR_n after all iterates up to n have been pushed.
    pub fn average(&self, n: u64) -> Result<DVector<f64>, EngineError> {
        if n < self.burn_in || self.count == 0 {
            return Err(EngineError::BurnInNotReached {
                queried: n,
                burn_in: self.burn_in,
            });
        }
        Ok(&self.sum / self.count as f64)
    }

    pub fn average_opt(&self) -> Option<DVector<f64>> {
        (self.count > 0).then(|| &self.sum / self.count as f64)
    }
}

/// Runs the SA recursion. The update closure writes f(theta, x) into its
/// output buffer; the step applied between theta_n and theta_{n+1} uses
/// alpha_{n+1}, with alpha_1 = alpha0.
pub fn run_sa<F>(mut update: F, cfg: &SARunConfig) -> Result<TrajectoryRecord, EngineError>
where
    F: FnMut(&DVector<f64>, usize, &mut DVector<f64>),
{
    cfg.validate()?;
    let n_steps = cfg.n_steps;
    let d = cfg.theta_init.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = cfg.theta_init.draw(&mut rng);
    let mut x = cfg.chain.initial_state(cfg.path_init, &mut rng)?;

    let alphas = cfg.schedule.alpha_table(n_steps);
    let mut averager = PrAverager::new(d, cfg.burn_in);
    averager.push(0, &theta);

    let mut record_indices: Vec<u64> = match &cfg.record {
        RecordSpec::Stride(s) => (0..=n_steps).step_by(*s as usize).collect(),
        RecordSpec::Indices(idx) => {
            let mut v: Vec<u64> = idx.iter().copied().filter(|&i| i <= n_steps).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        RecordSpec::FinalOnly => Vec::new(),
    };
    if record_indices.last() != Some(&n_steps) {
        record_indices.push(n_steps);
    }
    let mut samples = Vec::with_capacity(record_indices.len());
    let mut next_record = 0usize;

    let mut path = cfg.keep_path.then(|| {
        let mut p = Vec::with_capacity(n_steps as usize + 1);
        p.push(x);
        p
    });
    let mut full_iterates = cfg.keep_path.then(|| {
        let mut v = Vec::with_capacity(n_steps as usize + 1);
        v.push(theta.clone());
        v
    });

    let record_at =
        |n: u64, theta: &DVector<f64>, averager: &PrAverager, samples: &mut Vec<Sample>| {
            samples.push(Sample {
                n,
                theta: theta.clone(),
                pr: if n >= cfg.burn_in {
                    averager.average_opt()
                } else {
                    None
                },
            });
        };

    if record_indices.get(next_record) == Some(&0) {
        record_at(0, &theta, &averager, &mut samples);
        next_record += 1;
    }

    let mut buf = DVector::<f64>::zeros(d);
    for k in 1..=n_steps {
        x = cfg.chain.step(x, &mut rng);
        update(&theta, x, &mut buf);
        theta.axpy(alphas[(k - 1) as usize], &buf, 1.0);
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(EngineError::NumericalDivergence { index: k });
        }
        averager.push(k, &theta);
        if let Some(p) = path.as_mut() {
            p.push(x);
        }
        if let Some(v) = full_iterates.as_mut() {
            v.push(theta.clone());
        }
        if record_indices.get(next_record) == Some(&k) {
            record_at(k, &theta, &averager, &mut samples);
            next_record += 1;
        }
    }

    let final_pr = averager.average(n_steps)?;
    Ok(TrajectoryRecord {
        samples,
        final_theta: theta,
        final_pr,
        path,
        full_iterates,
        n_steps,
        burn_in: cfg.burn_in,
    })
}

/// The deterministic Euler companion x_{n+1} = x_n + alpha_{n+1} fbar(x_n).
/// Returns x_0..x_N.
pub fn noise_free_euler<F>(
    mut mean_field: F,
    schedule: &StepSizeSchedule,
    x0: DVector<f64>,
    n_steps: u64,
) -> Result<Vec<DVector<f64>>, EngineError>
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    let d = x0.len();
    let alphas = schedule.alpha_table(n_steps);
    let mut out = Vec::with_capacity(n_steps as usize + 1);
    let mut x = x0;
    out.push(x.clone());
    let mut buf = DVector::<f64>::zeros(d);
    for k in 1..=n_steps {
        mean_field(&x, &mut buf);
        x.axpy(alphas[(k - 1) as usize], &buf, 1.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(EngineError::NumericalDivergence { index: k });
        }
        out.push(x.clone());
    }
    Ok(out)
}
