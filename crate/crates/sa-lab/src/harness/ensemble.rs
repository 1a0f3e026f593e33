//! Seeded Monte Carlo ensembles over a schedule grid.

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::engine::{run_sa, RecordSpec, SARunConfig, TrajectoryRecord};
use crate::linear::LinearSAModel;
use crate::markov::PathInit;
use crate::stepsize::StepSizeSchedule;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashSet;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-run seed derived from (base_seed, grid_index, run_index). The grid
/// and run coordinates pass through distinct odd multipliers before mixing
/// so neighbouring runs land far apart in seed space.
pub fn derive_seed(base_seed: u64, grid_index: u64, run_index: u64) -> u64 {
    let mut s = splitmix64(base_seed);
    s = splitmix64(s ^ grid_index.wrapping_mul(0xA24BAED4963EE407));
    splitmix64(s ^ run_index.wrapping_mul(0x9FB21C651E98DF25))
}

/// Ensemble statistics at one recorded iterate index.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub n: u64,
    /// (1/M) sum ||theta_n - theta*||^2.
    pub mse_raw: f64,
    /// Ensemble mean of the raw iterate theta_n.
    pub mean_raw: DVector<f64>,
    /// (1/M) sum ||theta^PR_n - theta*||^2; None before the burn-in.
    pub mse_pr: Option<f64>,
    pub mean_pr: Option<DVector<f64>>,
    /// trace of the sample covariance (denominator M-1) of theta^PR_n.
    pub trace_cov_pr: Option<f64>,
    /// Theory approximation alpha_{n+1}^2 ||beta||^2 + trace(Sigma^PR)/n.
    pub mse_pr_pred: f64,
}

/// Summary of M runs at one (alpha0, rho) grid point.
#[derive(Debug, Clone)]
pub struct GridPointSummary {
    pub alpha0: f64,
    pub rho: f64,
    pub m: usize,
    pub n_steps: u64,
    pub burn_in: u64,
    pub seeds: Vec<u64>,
    pub finals_theta: Vec<DVector<f64>>,
    pub finals_pr: Vec<DVector<f64>>,
    /// Empirical mean of theta^PR_N.
    pub mean_pr: DVector<f64>,
    /// Sample covariance of theta^PR_N, denominator M-1.
    pub cov_pr: DMatrix<f64>,
    /// (1/M) sum ||theta^PR_N - theta*||^2.
    pub mse: f64,
    pub trace_cov_times_n: f64,
    /// Predicted mean bias alpha_{N+1} beta.
    pub bias_pred: DVector<f64>,
    pub trace_sigma_pr: f64,
    /// alpha_{N+1}^2 ||beta||^2 + trace(Sigma^PR)/N.
    pub mse_pred: f64,
    pub curves: Vec<CurvePoint>,
}

impl GridPointSummary {
    /// Gap in the exact decomposition
    /// MSE = trace(cov) (M-1)/M + ||mean - theta*||^2.
    pub fn mse_identity_gap(&self, theta_star: &DVector<f64>) -> f64 {
        let m = self.m as f64;
        let recon =
            self.cov_pr.trace() * (m - 1.0) / m + (&self.mean_pr - theta_star).norm_squared();
        (self.mse - recon).abs()
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    /// Two-state mixing parameter when the model has one (reporting only).
    pub model_a: Option<f64>,
    pub theta_star: DVector<f64>,
    pub checkpoints: Vec<u64>,
    pub grid: Vec<GridPointSummary>,
}

/// Runs M independent recursions per grid point and reduces them into
/// per-point summaries. Deterministic given the config: per-run seeds are
/// derived from (base_seed, grid_index, run_index) and results are reduced
/// in run order regardless of worker scheduling.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleSummary, HarnessError> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    run_ensemble_with_model(cfg, &model)
}

/// As `run_ensemble` but reusing an already-built model.
pub fn run_ensemble_with_model(
    cfg: &ExperimentConfig,
    model: &LinearSAModel,
) -> Result<EnsembleSummary, HarnessError> {
    let theta_init = cfg.init.to_theta_init(model)?;
    let theta_star = model.thetastar().clone();
    let checkpoints = cfg.effective_checkpoints();
    let trace_sigma_pr = model.theory_sigma_pr()?.sigma_pr.trace();

    // Seed hygiene: derived seeds must be pairwise distinct over the grid.
    let mut seen = HashSet::new();
    for gi in 0..cfg.grid.len() {
        for ri in 0..cfg.m_runs {
            let s = derive_seed(cfg.base_seed, gi as u64, ri as u64);
            if !seen.insert(s) {
                return Err(HarnessError::SeedCollision(format!(
                    "seed {s} repeats at grid point {gi}, run {ri}"
                )));
            }
        }
    }

    let mut grid = Vec::with_capacity(cfg.grid.len());
    for (gi, gp) in cfg.grid.iter().enumerate() {
        let schedule = StepSizeSchedule::new(gp.alpha0, gp.rho)?;
        // Warm the shared alpha table once before the parallel section.
        let _ = schedule.alpha_table(cfg.n_steps);
        let seeds: Vec<u64> = (0..cfg.m_runs)
            .map(|ri| derive_seed(cfg.base_seed, gi as u64, ri as u64))
            .collect();

        let records: Vec<TrajectoryRecord> = seeds
            .par_iter()
            .enumerate()
            .map(|(ri, &seed)| {
                let run_cfg = SARunConfig {
                    chain: model.chain().clone(),
                    schedule: schedule.clone(),
                    n_steps: cfg.n_steps,
                    burn_in: cfg.burn_in,
                    theta_init: theta_init.clone(),
                    seed,
                    record: RecordSpec::Indices(checkpoints.clone()),
                    path_init: PathInit::Stationary,
                    keep_path: false,
                };
                run_sa(model.update_fn(), &run_cfg).map_err(|source| HarnessError::RunFailed {
                    grid_index: gi,
                    run_index: ri,
                    seed,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;

        grid.push(summarize_grid_point(
            gp.alpha0,
            gp.rho,
            cfg,
            model,
            &schedule,
            trace_sigma_pr,
            seeds,
            &records,
            &checkpoints,
        )?);
    }

    Ok(EnsembleSummary {
        model_a: cfg.model.two_state_a(),
        theta_star,
        checkpoints,
        grid,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize_grid_point(
    alpha0: f64,
    rho: f64,
    cfg: &ExperimentConfig,
    model: &LinearSAModel,
    schedule: &StepSizeSchedule,
    trace_sigma_pr: f64,
    seeds: Vec<u64>,
    records: &[TrajectoryRecord],
    checkpoints: &[u64],
) -> Result<GridPointSummary, HarnessError> {
    let theta_star = model.thetastar();
    let d = theta_star.len();
    let m = records.len();
    let mf = m as f64;

    let finals_theta: Vec<DVector<f64>> = records.iter().map(|r| r.final_theta.clone()).collect();
    let finals_pr: Vec<DVector<f64>> = records.iter().map(|r| r.final_pr.clone()).collect();

    let (mean_pr, cov_pr) = mean_and_cov(&finals_pr);
    let mse = finals_pr
        .iter()
        .map(|v| (v - theta_star).norm_squared())
        .sum::<f64>()
        / mf;

    let beta = model.theory_beta(schedule)?;
    let alpha_next = schedule.alpha(cfg.n_steps + 1)?;
    let bias_pred = alpha_next * &beta;
    let mse_pred =
        alpha_next * alpha_next * beta.norm_squared() + trace_sigma_pr / cfg.n_steps as f64;

    // Per-checkpoint ensemble statistics; every run recorded exactly the
    // checkpoint indices, in order.
    let mut curves = Vec::with_capacity(checkpoints.len());
    for (ci, &n) in checkpoints.iter().enumerate() {
        debug_assert!(records.iter().all(|r| r.samples[ci].n == n));
        let mse_raw = records
            .iter()
            .map(|r| (&r.samples[ci].theta - theta_star).norm_squared())
            .sum::<f64>()
            / mf;
        let mut mean_raw = DVector::zeros(d);
        for r in records {
            mean_raw += &r.samples[ci].theta;
        }
        mean_raw /= mf;
        let prs: Option<Vec<&DVector<f64>>> =
            records.iter().map(|r| r.samples[ci].pr.as_ref()).collect();
        let (mse_pr, mean_pr_cp, trace_cov_pr) = match prs {
            Some(prs) => {
                let mse_pr = prs
                    .iter()
                    .map(|v| (*v - theta_star).norm_squared())
                    .sum::<f64>()
                    / mf;
                let mut mean = DVector::zeros(d);
                for v in &prs {
                    mean += *v;
                }
                mean /= mf;
                let mut tr = 0.0;
                for v in &prs {
                    tr += (*v - &mean).norm_squared();
                }
                tr /= mf - 1.0;
                (Some(mse_pr), Some(mean), Some(tr))
            }
            None => (None, None, None),
        };
        let a_next = schedule.alpha(n + 1)?;
        let mse_pr_pred = a_next * a_next * beta.norm_squared() + trace_sigma_pr / n as f64;
        curves.push(CurvePoint {
            n,
            mse_raw,
            mean_raw,
            mse_pr,
            mean_pr: mean_pr_cp,
            trace_cov_pr,
            mse_pr_pred,
        });
    }

    let summary = GridPointSummary {
        alpha0,
        rho,
        m,
        n_steps: cfg.n_steps,
        burn_in: cfg.burn_in,
        seeds,
        finals_theta,
        finals_pr,
        trace_cov_times_n: cov_pr.trace() * cfg.n_steps as f64,
        mean_pr,
        cov_pr,
        mse,
        bias_pred,
        trace_sigma_pr,
        mse_pred,
        curves,
    };
    debug_assert!(
        summary.mse_identity_gap(theta_star) <= 1e-10 * (1.0 + summary.mse),
        "mse decomposition identity violated"
    );
    Ok(summary)
}

/// Two-pass sample mean and covariance (denominator M-1).
pub fn mean_and_cov(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let m = samples.len();
    let d = samples[0].len();
    let mut mean = DVector::zeros(d);
    for v in samples {
        mean += v;
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in samples {
        let c = v - &mean;
        cov += &c * c.transpose();
    }
    cov /= (m - 1) as f64;
    (mean, cov)
}
