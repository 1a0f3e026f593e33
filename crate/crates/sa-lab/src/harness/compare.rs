//! Empirical-vs-theory comparison tables for ensemble summaries.

use super::ensemble::EnsembleSummary;
use super::HarnessError;
use crate::linear::LinearSAModel;
use nalgebra::DVector;

/// One grid point compared against its asymptotic predictions.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub alpha0: f64,
    pub rho: f64,
    pub m: usize,
    pub n_steps: u64,
    /// Empirical mean bias, mean(theta^PR_N) - theta*.
    pub emp_bias: DVector<f64>,
    /// Predicted mean bias alpha_{N+1} beta.
    pub pred_bias: DVector<f64>,
    /// Standard error of each mean component, sqrt(cov_ii / M).
    pub se_mean: DVector<f64>,
    /// Projection of the empirical bias onto the predicted direction,
    /// <emp, pred> / ||pred||^2; NaN when the prediction is zero.
    pub bias_ratio: f64,
    /// N trace(cov) / trace(Sigma^PR).
    pub var_ratio: f64,
    /// Relative asymptotic standard error of a variance entry,
    /// sqrt(2 / (M-1)).
    pub var_se_rel: f64,
    pub trace_cov_times_n: f64,
    pub trace_sigma_pr: f64,
    pub mse: f64,
    pub mse_pred: f64,
    pub mse_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub model_a: Option<f64>,
    pub rows: Vec<ComparisonRow>,
}

/// Builds the per-grid-point comparison table. The summary must have been
/// produced by an ensemble on the same model.
pub fn compare_theory(
    summary: &EnsembleSummary,
    model: &LinearSAModel,
) -> Result<ComparisonTable, HarnessError> {
    let theta_star = model.thetastar();
    if summary.theta_star.len() != theta_star.len()
        || (&summary.theta_star - theta_star).amax() > 1e-12
    {
        return Err(HarnessError::ModelMismatch(format!(
            "summary target {:?} vs model target {:?}",
            summary.theta_star.as_slice(),
            theta_star.as_slice()
        )));
    }

    let rows = summary
        .grid
        .iter()
        .map(|g| {
            let emp_bias = &g.mean_pr - theta_star;
            let pred_bias = g.bias_pred.clone();
            let se_mean = DVector::from_iterator(
                theta_star.len(),
                (0..theta_star.len()).map(|i| (g.cov_pr[(i, i)] / g.m as f64).sqrt()),
            );
            let pred_sq = pred_bias.norm_squared();
            let bias_ratio = if pred_sq > 0.0 {
                emp_bias.dot(&pred_bias) / pred_sq
            } else {
                f64::NAN
            };
            let var_ratio = g.trace_cov_times_n / g.trace_sigma_pr;
            ComparisonRow {
                alpha0: g.alpha0,
                rho: g.rho,
                m: g.m,
                n_steps: g.n_steps,
                emp_bias,
                pred_bias,
                se_mean,
                bias_ratio,
                var_ratio,
                var_se_rel: (2.0 / (g.m as f64 - 1.0)).sqrt(),
                trace_cov_times_n: g.trace_cov_times_n,
                trace_sigma_pr: g.trace_sigma_pr,
                mse: g.mse,
                mse_pred: g.mse_pred,
                mse_ratio: g.mse / g.mse_pred,
            }
        })
        .collect();

    Ok(ComparisonTable {
        model_a: summary.model_a,
        rows,
    })
}
