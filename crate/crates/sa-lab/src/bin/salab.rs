//! Command-line front end: theory tables, seeded ensembles, comparison
//! tables, figure reproduction, decomposition diagnostics and rate fits.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sa_lab::engine::{run_sa, RecordSpec, SARunConfig};
use sa_lab::harness::csv::{
    write_curves_csv, write_finals_csv, write_ratios_csv, write_summary_csv,
};
use sa_lab::harness::ensemble::derive_seed;
use sa_lab::harness::reproduce::{reproduce_from_summary, Figure};
use sa_lab::harness::{compare_theory, rate_checks, run_ensemble, ExperimentConfig};
use sa_lab::markov::PathInit;
use sa_lab::stepsize::StepSizeSchedule;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "salab", about = "Stochastic approximation laboratory", version)]
struct Cli {
    /// Path to the experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (affects speed only, never results).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also emit SVG plots next to the CSV tables.
    #[arg(long, global = true)]
    emit_plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the asymptotic predictions for each grid point as JSON.
    Theory,
    /// Run the configured ensembles and write summary/curves/finals CSVs.
    Simulate,
    /// Run the ensembles and write the empirical-vs-theory ratio table.
    Compare,
    /// Reproduce one of the benchmark figures.
    Reproduce {
        /// fig1 (mean/variance vs rho), fig2 (MSE curves), fig4 (ratios).
        #[arg(long)]
        figure: String,
    },
    /// Noise-decomposition diagnostics on a single full-path run (JSON).
    Decomp {
        /// Horizon for the diagnostic run (capped at 10^6).
        #[arg(long, default_value_t = 100_000)]
        n_steps: u64,
    },
    /// Log-log rate-exponent fits over the configured checkpoints (JSON).
    Rates,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config <path> is required for this subcommand")?;
    let mut cfg =
        ExperimentConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if cli.emit_plots {
        cfg.emit_plots = true;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker threads")?;
    }

    match &cli.command {
        Command::Theory => {
            let cfg = load_config(&cli)?;
            let model = cfg.model.build()?;
            let mut stats = Vec::new();
            for gp in &cfg.grid {
                let schedule = StepSizeSchedule::new(gp.alpha0, gp.rho)?;
                stats.push(model.theory_stats(&schedule)?);
            }
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Simulate => {
            let cfg = load_config(&cli)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            let summary = run_ensemble(&cfg)?;
            let summary_path = dir.join("summary.csv");
            write_summary_csv(&summary_path, &summary)?;
            let curves_path = dir.join("curves.csv");
            write_curves_csv(&curves_path, &summary)?;
            let finals_path = dir.join("finals.csv");
            write_finals_csv(&finals_path, &summary)?;
            for path in [summary_path, curves_path, finals_path] {
                println!("wrote {}", path.display());
            }
        }
        Command::Compare => {
            let cfg = load_config(&cli)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            let model = cfg.model.build()?;
            let summary = run_ensemble(&cfg)?;
            let table = compare_theory(&summary, &model)?;
            let path = dir.join("ratios.csv");
            write_ratios_csv(&path, &table)?;
            println!("wrote {}", path.display());
            println!("rho\tbias_ratio\tvar_ratio\tmse_ratio");
            for row in &table.rows {
                println!(
                    "{}\t{:.4}\t{:.4}\t{:.4}",
                    row.rho, row.bias_ratio, row.var_ratio, row.mse_ratio
                );
            }
        }
        Command::Reproduce { figure } => {
            let figure: Figure = figure.parse().map_err(anyhow::Error::msg)?;
            let cfg = load_config(&cli)?;
            let dir = out_dir(&cfg);
            let summary = run_ensemble(&cfg)?;
            let files = reproduce_from_summary(figure, &cfg, &summary, &dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Decomp { n_steps } => {
            let cfg = load_config(&cli)?;
            if *n_steps > 1_000_000 {
                bail!("decomp diagnostics are capped at 10^6 steps, got {n_steps}");
            }
            let model = cfg.model.build()?;
            let gp = cfg.grid[0];
            let schedule = StepSizeSchedule::new(gp.alpha0, gp.rho)?;
            let run_cfg = SARunConfig {
                chain: model.chain().clone(),
                schedule: schedule.clone(),
                n_steps: *n_steps,
                burn_in: cfg.burn_in.min(n_steps / 2),
                theta_init: cfg.init.to_theta_init(&model)?,
                seed: derive_seed(cfg.base_seed, 0, 0),
                record: RecordSpec::FinalOnly,
                path_init: PathInit::Stationary,
                keep_path: true,
            };
            let record = run_sa(model.update_fn(), &run_cfg)?;
            let terms = sa_lab::decompose_path(&model, &schedule, &record)?;
            println!("{}", serde_json::to_string_pretty(&terms.stats())?);
        }
        Command::Rates => {
            let cfg = load_config(&cli)?;
            let report = rate_checks(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
