//! Experiment configuration: a JSON document with strict schema (unknown
//! keys rejected) describing the model, schedule grid, ensemble sizes and
//! initialization.

use crate::linear::{LinearError, LinearSAModel};
use crate::markov::{FiniteMarkovChain, StateMatrixTable, StateVectorTable};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Markov(#[from] crate::markov::MarkovError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    TwoState { a: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

impl ChainSpec {
    pub fn build(&self) -> Result<FiniteMarkovChain, ConfigError> {
        match self {
            ChainSpec::TwoState { a } => Ok(FiniteMarkovChain::two_state(*a)?),
            ChainSpec::Matrix { rows } => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(ConfigError::Invalid(
                        "transition matrix must be square".into(),
                    ));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(FiniteMarkovChain::new(DMatrix::from_row_slice(
                    n, n, &flat,
                ))?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// The two-state benchmark model with mixing parameter `a`.
    PaperSection3 { a: f64 },
    /// Its additive-noise variant (state-independent slope).
    PaperSection3Ad { a: f64 },
    /// Fully explicit model: chain plus per-state matrices and vectors.
    Inline {
        chain: ChainSpec,
        /// a_tables[x] is the d x d matrix A(x) in row-major nested arrays.
        a_tables: Vec<Vec<Vec<f64>>>,
        /// b_tables[x] is the vector b(x).
        b_tables: Vec<Vec<f64>>,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<LinearSAModel, ConfigError> {
        match self {
            ModelSpec::PaperSection3 { a } => Ok(LinearSAModel::two_state_benchmark(*a)?),
            ModelSpec::PaperSection3Ad { a } => {
                Ok(LinearSAModel::two_state_benchmark_additive(*a)?)
            }
            ModelSpec::Inline {
                chain,
                a_tables,
                b_tables,
            } => {
                let chain = chain.build()?;
                let mats = a_tables
                    .iter()
                    .map(|m| {
                        let r = m.len();
                        let c = m.first().map(|row| row.len()).unwrap_or(0);
                        if m.iter().any(|row| row.len() != c) {
                            return Err(ConfigError::Invalid("ragged A(x) matrix".into()));
                        }
                        let flat: Vec<f64> = m.iter().flatten().copied().collect();
                        Ok(DMatrix::from_row_slice(r, c, &flat))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let a = StateMatrixTable::new(mats)?;
                let b = StateVectorTable::from_rows(b_tables)?;
                Ok(LinearSAModel::new(chain, a, b)?)
            }
        }
    }

    /// The two-state mixing parameter, when the model has one.
    pub fn two_state_a(&self) -> Option<f64> {
        match self {
            ModelSpec::PaperSection3 { a } | ModelSpec::PaperSection3Ad { a } => Some(*a),
            ModelSpec::Inline {
                chain: ChainSpec::TwoState { a },
                ..
            } => Some(*a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub alpha0: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// theta_0 ~ N(theta*, cov_scale * I).
    Gaussian { cov_scale: f64 },
    /// Deterministic initial parameter.
    Fixed { value: Vec<f64> },
}

impl InitSpec {
    pub fn to_theta_init(
        &self,
        model: &LinearSAModel,
    ) -> Result<crate::engine::ThetaInit, ConfigError> {
        match self {
            InitSpec::Gaussian { cov_scale } => {
                if *cov_scale < 0.0 {
                    return Err(ConfigError::Invalid(format!(
                        "cov_scale = {cov_scale} must be >= 0"
                    )));
                }
                Ok(crate::engine::ThetaInit::Gaussian {
                    mean: model.thetastar().clone(),
                    cov_scale: *cov_scale,
                })
            }
            InitSpec::Fixed { value } => {
                if value.len() != model.dim() {
                    return Err(ConfigError::Invalid(format!(
                        "fixed init has dimension {}, model has {}",
                        value.len(),
                        model.dim()
                    )));
                }
                Ok(crate::engine::ThetaInit::Fixed(DVector::from_row_slice(
                    value,
                )))
            }
        }
    }
}

fn default_emit_plots() -> bool {
    false
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub grid: Vec<GridPoint>,
    /// Runs per grid point (M).
    pub m_runs: usize,
    /// Horizon (N).
    pub n_steps: u64,
    /// Burn-in (N0).
    pub burn_in: u64,
    pub base_seed: u64,
    pub init: InitSpec,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_emit_plots")]
    pub emit_plots: bool,
    /// Iterate indices at which ensemble statistics are recorded; when
    /// absent, ~60 logarithmically spaced checkpoints are used.
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m_runs < 2 {
            return Err(ConfigError::Invalid(format!(
                "m_runs = {} must be >= 2",
                self.m_runs
            )));
        }
        if self.burn_in >= self.n_steps {
            return Err(ConfigError::Invalid(format!(
                "burn_in {} must be < n_steps {}",
                self.burn_in, self.n_steps
            )));
        }
        if self.grid.is_empty() {
            return Err(ConfigError::Invalid("schedule grid is empty".into()));
        }
        Ok(())
    }

    /// Checkpoints actually used: explicit ones clipped to the horizon, or
    /// a log-spaced default from 10 to N.
    pub fn effective_checkpoints(&self) -> Vec<u64> {
        let mut cps: Vec<u64> = match &self.checkpoints {
            Some(list) => list
                .iter()
                .copied()
                .filter(|&n| n <= self.n_steps)
                .collect(),
            None => log_spaced_checkpoints(10, self.n_steps, 60),
        };
        cps.sort_unstable();
        cps.dedup();
        if cps.last() != Some(&self.n_steps) {
            cps.push(self.n_steps);
        }
        cps
    }
}

/// `count` approximately log-spaced integers in [lo, hi].
pub fn log_spaced_checkpoints(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    assert!(lo >= 1 && hi >= lo && count >= 2);
    let (llo, lhi) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            (llo + t * (lhi - llo)).exp().round() as u64
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}
