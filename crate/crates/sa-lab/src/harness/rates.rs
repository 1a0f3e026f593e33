//! Log-log rate-exponent fits over ensemble checkpoint curves.

use super::config::ExperimentConfig;
use super::ensemble::{run_ensemble, EnsembleSummary};
use super::HarnessError;
use crate::stepsize::StepSizeSchedule;

/// Ordinary least-squares line fit with slope standard error and R^2.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN with fewer than 3 points).
    pub se: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// OLS fit of y against x.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<SlopeFit, HarnessError> {
    let n = points.len();
    if n < 2 {
        return Err(HarnessError::InsufficientGrid(format!(
            "need at least 2 points for a line fit, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let syy = points.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>();
    if sxx == 0.0 {
        return Err(HarnessError::InsufficientGrid(
            "degenerate abscissae in fit".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum::<f64>();
    let se = if n >= 3 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        se,
        r2,
        n_points: n,
    })
}

/// OLS fit of log y against log x; all coordinates must be positive.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit, HarnessError> {
    let logged: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if logged.len() < points.len() {
        return Err(HarnessError::InsufficientGrid(
            "non-positive coordinates in log-log fit".into(),
        ));
    }
    linear_fit(&logged)
}

/// Checkpoint windows for the three slope fits.
#[derive(Debug, Clone, Copy)]
pub struct RateWindows {
    /// Minimum n for the PR-bias slope (the bias must dominate noise).
    pub bias_min_n: u64,
    /// Minimum n for the raw-MSE slope (past the init transient).
    pub raw_min_n: u64,
    /// Minimum n for the PR-variance flatness check.
    pub var_min_n: u64,
}

impl RateWindows {
    pub fn default_for(cfg: &ExperimentConfig) -> Self {
        Self {
            bias_min_n: cfg.burn_in.max(cfg.n_steps / 20),
            // Start past the region where the second-order step-size
            // correction (relative size ~ 15 alpha on the benchmark) still
            // bends the raw-MSE curve.
            raw_min_n: 10.max(cfg.n_steps / 30),
            var_min_n: cfg.burn_in.max(cfg.n_steps / 20),
        }
    }
}

/// Fitted exponents for one grid point.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateRow {
    pub alpha0: f64,
    pub rho: f64,
    /// Slope of log ||mean theta^PR_n - theta*|| vs log alpha_{n+1};
    /// expected 1 when the bias prediction is nonzero.
    pub bias: Option<SlopeFit>,
    /// Slope of log MSE(theta_n) vs log alpha_n; expected 1.
    pub raw: SlopeFit,
    /// Slope of log [n trace(cov theta^PR_n)] vs log n; expected 0.
    pub var_pr: Option<SlopeFit>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
}

/// Runs the configured ensemble and fits the three rate exponents per grid
/// point (config checkpoints supply the n-grid; at least 3 per window).
pub fn rate_checks(cfg: &ExperimentConfig) -> Result<RateReport, HarnessError> {
    let summary = run_ensemble(cfg)?;
    rate_report_from_summary(&summary, &RateWindows::default_for(cfg))
}

/// Rate fits over an already-computed ensemble summary.
pub fn rate_report_from_summary(
    summary: &EnsembleSummary,
    windows: &RateWindows,
) -> Result<RateReport, HarnessError> {
    let mut rows = Vec::with_capacity(summary.grid.len());
    for g in &summary.grid {
        let schedule = StepSizeSchedule::new(g.alpha0, g.rho)?;

        let raw_pts: Vec<(f64, f64)> = g
            .curves
            .iter()
            .filter(|c| c.n >= windows.raw_min_n)
            .map(|c| Ok((schedule.alpha(c.n)?, c.mse_raw)))
            .collect::<Result<_, HarnessError>>()?;
        if raw_pts.len() < 3 {
            return Err(HarnessError::InsufficientGrid(format!(
                "raw-MSE window has {} checkpoints at rho = {}, need 3",
                raw_pts.len(),
                g.rho
            )));
        }
        let raw = loglog_slope(&raw_pts)?;

        let mut bias_pts = Vec::new();
        let mut var_pts = Vec::new();
        for c in &g.curves {
            if let (Some(mean), Some(tr)) = (&c.mean_pr, c.trace_cov_pr) {
                if c.n >= windows.bias_min_n {
                    bias_pts.push((
                        schedule.alpha(c.n + 1)?,
                        (mean - &summary.theta_star).norm(),
                    ));
                }
                if c.n >= windows.var_min_n {
                    var_pts.push((c.n as f64, c.n as f64 * tr));
                }
            }
        }
        let bias = if bias_pts.len() >= 3 {
            Some(loglog_slope(&bias_pts)?)
        } else {
            None
        };
        let var_pr = if var_pts.len() >= 3 {
            Some(loglog_slope(&var_pts)?)
        } else {
            None
        };
        if bias.is_none() && var_pr.is_none() {
            return Err(HarnessError::InsufficientGrid(format!(
                "fewer than 3 post-burn-in checkpoints at rho = {}",
                g.rho
            )));
        }
        rows.push(RateRow {
            alpha0: g.alpha0,
            rho: g.rho,
            bias,
            raw,
            var_pr,
        });
    }
    Ok(RateReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{GridPoint, InitSpec, ModelSpec};

    #[test]
    fn exact_power_law_recovered() {
        let pts: Vec<(f64, f64)> = (1..=20)
            .map(|k| (k as f64, 3.0 * (k as f64).powf(1.7)))
            .collect();
        let fit = loglog_slope(&pts).unwrap();
        assert!((fit.slope - 1.7).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!(fit.se < 1e-12);
        assert!(fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn nonpositive_points_rejected() {
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 2.0)]).is_err());
        assert!(linear_fit(&[(1.0, 1.0)]).is_err());
        assert!(linear_fit(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn raw_mse_slope_near_one_on_benchmark() {
        let cfg = ExperimentConfig {
            model: ModelSpec::PaperSection3 { a: 0.7 },
            grid: vec![GridPoint {
                alpha0: 0.5,
                rho: 0.6,
            }],
            m_runs: 60,
            n_steps: 20_000,
            burn_in: 500,
            base_seed: 31,
            init: InitSpec::Gaussian { cov_scale: 25.0 },
            out_dir: None,
            emit_plots: false,
            checkpoints: Some(vec![1_000, 2_000, 5_000, 10_000, 20_000]),
        };
        let report = rate_checks(&cfg).unwrap();
        let row = &report.rows[0];
        assert!(
            (row.raw.slope - 1.0).abs() < 0.4,
            "slope = {}",
            row.raw.slope
        );
        assert!(row.raw.n_points == 5);
    }

    #[test]
    fn too_few_checkpoints_is_an_error() {
        let cfg = ExperimentConfig {
            model: ModelSpec::PaperSection3 { a: 0.7 },
            grid: vec![GridPoint {
                alpha0: 0.5,
                rho: 0.6,
            }],
            m_runs: 4,
            n_steps: 2_000,
            burn_in: 100,
            base_seed: 3,
            init: InitSpec::Gaussian { cov_scale: 25.0 },
            out_dir: None,
            emit_plots: false,
            checkpoints: Some(vec![1_000, 2_000]),
        };
        assert!(matches!(
            rate_checks(&cfg),
            Err(HarnessError::InsufficientGrid(_))
        ));
    }
}
