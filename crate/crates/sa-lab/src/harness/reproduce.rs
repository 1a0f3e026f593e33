//! Batch reproduction of the benchmark result tables: summary, MSE curves
//! and empirical/theory ratio tables, with optional SVG plots.

use super::compare::compare_theory;
use super::csv::{write_curves_csv, write_ratios_csv, write_summary_csv};
use super::ensemble::{run_ensemble, EnsembleSummary};
use super::plot::{LinePlot, Series};
use super::{ExperimentConfig, HarnessError};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Empirical vs theoretical mean and variance across the rho grid.
    Fig1,
    /// MSE trajectories with the finite-time bound and the PR
    /// bias-plus-variance approximation overlaid.
    Fig2,
    /// Ratio curves (empirical / theoretical) across the rho grid.
    Fig4,
}

impl std::str::FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig4" => Ok(Figure::Fig4),
            other => Err(format!(
                "unknown figure '{other}' (expected fig1, fig2 or fig4)"
            )),
        }
    }
}

/// Runs the configured ensemble and emits the figure's tables (and plots
/// when requested) into `out_dir`. Returns the written paths.
pub fn reproduce(
    figure: Figure,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let summary = run_ensemble(cfg)?;
    reproduce_from_summary(figure, cfg, &summary, out_dir)
}

/// As `reproduce`, reusing an already-computed ensemble summary.
pub fn reproduce_from_summary(
    figure: Figure,
    cfg: &ExperimentConfig,
    summary: &EnsembleSummary,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match figure {
        Figure::Fig1 => {
            let path = out_dir.join("summary.csv");
            write_summary_csv(&path, summary)?;
            written.push(path);
            if cfg.emit_plots {
                written.extend(plot_fig1(summary, out_dir)?);
            }
        }
        Figure::Fig2 => {
            let path = out_dir.join("curves.csv");
            write_curves_csv(&path, summary)?;
            written.push(path);
            if cfg.emit_plots {
                written.extend(plot_fig2(summary, out_dir)?);
            }
        }
        Figure::Fig4 => {
            let model = cfg.model.build()?;
            let table = compare_theory(summary, &model)?;
            let path = out_dir.join("ratios.csv");
            write_ratios_csv(&path, &table)?;
            written.push(path);
            if cfg.emit_plots {
                let plot = LinePlot {
                    title: "empirical / theoretical ratios".into(),
                    x_label: "rho".into(),
                    y_label: "ratio".into(),
                    log_x: false,
                    log_y: false,
                    series: vec![
                        Series {
                            label: "bias ratio".into(),
                            points: table
                                .rows
                                .iter()
                                .filter(|r| r.bias_ratio.is_finite())
                                .map(|r| (r.rho, r.bias_ratio))
                                .collect(),
                        },
                        Series {
                            label: "variance ratio".into(),
                            points: table.rows.iter().map(|r| (r.rho, r.var_ratio)).collect(),
                        },
                    ],
                };
                let p = out_dir.join("fig4_ratios.svg");
                plot.write(&p)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

fn plot_fig1(summary: &EnsembleSummary, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let d = summary.theta_star.len();
    let mut mean_series = Vec::new();
    for i in 0..d {
        mean_series.push(Series {
            label: format!("empirical mean bias [{i}]"),
            points: summary
                .grid
                .iter()
                .map(|g| (g.rho, g.mean_pr[i] - summary.theta_star[i]))
                .collect(),
        });
        mean_series.push(Series {
            label: format!("predicted bias [{i}]"),
            points: summary
                .grid
                .iter()
                .map(|g| (g.rho, g.bias_pred[i]))
                .collect(),
        });
    }
    let mean_plot = LinePlot {
        title: "mean bias vs rho".into(),
        x_label: "rho".into(),
        y_label: "bias".into(),
        log_x: false,
        log_y: false,
        series: mean_series,
    };
    let var_plot = LinePlot {
        title: "scaled PR variance vs rho".into(),
        x_label: "rho".into(),
        y_label: "N trace(cov)".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series {
                label: "empirical".into(),
                points: summary
                    .grid
                    .iter()
                    .map(|g| (g.rho, g.trace_cov_times_n))
                    .collect(),
            },
            Series {
                label: "theory".into(),
                points: summary
                    .grid
                    .iter()
                    .map(|g| (g.rho, g.trace_sigma_pr))
                    .collect(),
            },
        ],
    };
    let p1 = out_dir.join("fig1_mean.svg");
    let p2 = out_dir.join("fig1_variance.svg");
    mean_plot.write(&p1)?;
    var_plot.write(&p2)?;
    Ok(vec![p1, p2])
}

fn plot_fig2(summary: &EnsembleSummary, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    use crate::linear::{finite_time_bound, FiniteTimeBoundParams};
    use crate::stepsize::StepSizeSchedule;

    let mut raw_series = Vec::new();
    let mut pr_series = Vec::new();
    for g in &summary.grid {
        raw_series.push(Series {
            label: format!("raw MSE, rho={}", g.rho),
            points: g.curves.iter().map(|c| (c.n as f64, c.mse_raw)).collect(),
        });
        if let Some(a) = summary.model_a.filter(|&a| a > 0.5 && a < 1.0) {
            let params = FiniteTimeBoundParams::two_state_benchmark(a, g.alpha0)?;
            let schedule = StepSizeSchedule::new(g.alpha0, g.rho)?;
            raw_series.push(Series {
                label: format!("bound, rho={}", g.rho),
                points: g
                    .curves
                    .iter()
                    .map(|c| Ok((c.n as f64, finite_time_bound(&params, &schedule, c.n)?)))
                    .collect::<Result<_, HarnessError>>()?,
            });
        }
        pr_series.push(Series {
            label: format!("PR MSE, rho={}", g.rho),
            points: g
                .curves
                .iter()
                .filter_map(|c| c.mse_pr.map(|m| (c.n as f64, m)))
                .collect(),
        });
        pr_series.push(Series {
            label: format!("PR prediction, rho={}", g.rho),
            points: g
                .curves
                .iter()
                .map(|c| (c.n as f64, c.mse_pr_pred))
                .collect(),
        });
    }
    let raw_plot = LinePlot {
        title: "raw MSE with finite-time bound".into(),
        x_label: "n".into(),
        y_label: "MSE".into(),
        log_x: true,
        log_y: true,
        series: raw_series,
    };
    let pr_plot = LinePlot {
        title: "PR MSE with asymptotic prediction".into(),
        x_label: "n".into(),
        y_label: "MSE".into(),
        log_x: true,
        log_y: true,
        series: pr_series,
    };
    let p1 = out_dir.join("fig2_raw.svg");
    let p2 = out_dir.join("fig2_pr.svg");
    raw_plot.write(&p1)?;
    pr_plot.write(&p2)?;
    Ok(vec![p1, p2])
}
