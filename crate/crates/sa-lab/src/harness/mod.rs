//! Monte Carlo ensemble harness: seeded ensembles over a schedule grid,
//! empirical-vs-theory comparison tables, rate-exponent fits, CSV emission
//! and optional SVG plots.

pub mod compare;
pub mod config;
pub mod csv;
pub mod ensemble;
pub mod plot;
pub mod rates;
pub mod reproduce;

pub use compare::{compare_theory, ComparisonRow, ComparisonTable};
pub use config::{ChainSpec, ConfigError, ExperimentConfig, GridPoint, InitSpec, ModelSpec};
pub use ensemble::{derive_seed, run_ensemble, CurvePoint, EnsembleSummary, GridPointSummary};
pub use rates::{loglog_slope, rate_checks, RateReport, SlopeFit};
pub use reproduce::{reproduce, Figure};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Linear(#[from] crate::linear::LinearError),
    #[error(transparent)]
    StepSize(#[from] crate::stepsize::StepSizeError),
    #[error("run failed (grid point {grid_index}, run {run_index}, seed {seed}): {source}")]
    RunFailed {
        grid_index: usize,
        run_index: usize,
        seed: u64,
        source: crate::engine::EngineError,
    },
    #[error("seed collision in derived per-run seeds: {0}")]
    SeedCollision(String),
    #[error("insufficient grid for rate fitting: {0}")]
    InsufficientGrid(String),
    #[error("summary and theory were computed on different models: {0}")]
    ModelMismatch(String),
    #[error(transparent)]
    Decomp(#[from] crate::decomp::DecompError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
