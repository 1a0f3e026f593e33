//! Deterministic CSV emission. Floats use Rust's shortest-roundtrip
//! formatting so identical inputs yield byte-identical files.

use super::compare::ComparisonTable;
use super::ensemble::EnsembleSummary;
use super::HarnessError;
use crate::linear::{finite_time_bound, FiniteTimeBoundParams};
use crate::stepsize::StepSizeSchedule;
use std::fmt::Write as _;
use std::path::Path;

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// summary.csv: one row per grid point.
pub fn write_summary_csv(path: &Path, summary: &EnsembleSummary) -> Result<(), HarnessError> {
    let d = summary.theta_star.len();
    let mut out = String::new();
    let mut header = vec![
        "a".to_string(),
        "rho".to_string(),
        "alpha0".to_string(),
        "M".to_string(),
        "N".to_string(),
        "N0".to_string(),
    ];
    header.extend((1..=d).map(|i| format!("mean_{i}")));
    header.extend((1..=d).map(|i| format!("bias_pred_{i}")));
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("cov_{i}{j}"));
        }
    }
    header.extend(["trace_cov_times_N", "trace_sigma_pr", "mse", "mse_pred"].map(str::to_string));
    writeln!(out, "{}", header.join(",")).unwrap();

    for g in &summary.grid {
        let mut row = vec![
            fmt_opt(summary.model_a),
            fmt_f64(g.rho),
            fmt_f64(g.alpha0),
            g.m.to_string(),
            g.n_steps.to_string(),
            g.burn_in.to_string(),
        ];
        row.extend(g.mean_pr.iter().map(|&v| fmt_f64(v)));
        row.extend(g.bias_pred.iter().map(|&v| fmt_f64(v)));
        for i in 0..d {
            for j in 0..d {
                row.push(fmt_f64(g.cov_pr[(i, j)]));
            }
        }
        row.push(fmt_f64(g.trace_cov_times_n));
        row.push(fmt_f64(g.trace_sigma_pr));
        row.push(fmt_f64(g.mse));
        row.push(fmt_f64(g.mse_pred));
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// curves.csv: one row per (grid point, checkpoint). The finite-time bound
/// column is filled when bound constants are available for the model;
/// PR columns are empty before the burn-in.
pub fn write_curves_csv(path: &Path, summary: &EnsembleSummary) -> Result<(), HarnessError> {
    let mut out = String::new();
    writeln!(out, "rho,n,mse_raw,mse_pr,mse_pr_pred,finite_time_bound").unwrap();
    for g in &summary.grid {
        let schedule = StepSizeSchedule::new(g.alpha0, g.rho)?;
        // Bound constants exist for the two-state benchmark when the
        // uniform-ergodicity rate 2a-1 lies in (0,1).
        let params = summary
            .model_a
            .filter(|&a| a > 0.5 && a < 1.0)
            .map(|a| FiniteTimeBoundParams::two_state_benchmark(a, g.alpha0))
            .transpose()?;
        for c in &g.curves {
            let bound = params
                .as_ref()
                .map(|p| finite_time_bound(p, &schedule, c.n))
                .transpose()?;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(g.rho),
                c.n,
                fmt_f64(c.mse_raw),
                fmt_opt(c.mse_pr),
                fmt_f64(c.mse_pr_pred),
                fmt_opt(bound),
            )
            .unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// finals.csv: per-run final iterates and PR averages.
pub fn write_finals_csv(path: &Path, summary: &EnsembleSummary) -> Result<(), HarnessError> {
    let d = summary.theta_star.len();
    let mut out = String::new();
    let mut header = vec![
        "rho".to_string(),
        "alpha0".to_string(),
        "run".to_string(),
        "seed".to_string(),
    ];
    header.extend((1..=d).map(|i| format!("theta_{i}")));
    header.extend((1..=d).map(|i| format!("pr_{i}")));
    writeln!(out, "{}", header.join(",")).unwrap();
    for g in &summary.grid {
        for (ri, seed) in g.seeds.iter().enumerate() {
            let mut row = vec![
                fmt_f64(g.rho),
                fmt_f64(g.alpha0),
                ri.to_string(),
                seed.to_string(),
            ];
            row.extend(g.finals_theta[ri].iter().map(|&v| fmt_f64(v)));
            row.extend(g.finals_pr[ri].iter().map(|&v| fmt_f64(v)));
            writeln!(out, "{}", row.join(",")).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// ratios.csv: empirical/theory comparison per grid point.
pub fn write_ratios_csv(path: &Path, table: &ComparisonTable) -> Result<(), HarnessError> {
    let mut out = String::new();
    let d = table.rows.first().map(|r| r.emp_bias.len()).unwrap_or(0);
    let mut header = vec![
        "a".to_string(),
        "rho".to_string(),
        "alpha0".to_string(),
        "M".to_string(),
        "N".to_string(),
    ];
    header.extend((1..=d).map(|i| format!("emp_bias_{i}")));
    header.extend((1..=d).map(|i| format!("pred_bias_{i}")));
    header.extend((1..=d).map(|i| format!("se_mean_{i}")));
    header.extend(
        [
            "bias_ratio",
            "var_ratio",
            "var_se_rel",
            "mse",
            "mse_pred",
            "mse_ratio",
        ]
        .map(str::to_string),
    );
    writeln!(out, "{}", header.join(",")).unwrap();
    for r in &table.rows {
        let mut row = vec![
            fmt_opt(table.model_a),
            fmt_f64(r.rho),
            fmt_f64(r.alpha0),
            r.m.to_string(),
            r.n_steps.to_string(),
        ];
        row.extend(r.emp_bias.iter().map(|&v| fmt_f64(v)));
        row.extend(r.pred_bias.iter().map(|&v| fmt_f64(v)));
        row.extend(r.se_mean.iter().map(|&v| fmt_f64(v)));
        for v in [
            r.bias_ratio,
            r.var_ratio,
            r.var_se_rel,
            r.mse,
            r.mse_pred,
            r.mse_ratio,
        ] {
            row.push(fmt_f64(v));
        }
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Minimal CSV reader for round-trip tests and downstream tooling: returns
/// (header, rows) with empty cells preserved as empty strings.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::compare::compare_theory;
    use crate::harness::config::{ExperimentConfig, GridPoint, InitSpec, ModelSpec};
    use crate::harness::ensemble::run_ensemble;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("sa-lab-csv-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn summary() -> (ExperimentConfig, EnsembleSummary) {
        let cfg = ExperimentConfig {
            model: ModelSpec::PaperSection3 { a: 0.7 },
            grid: vec![
                GridPoint {
                    alpha0: 0.5,
                    rho: 0.45,
                },
                GridPoint {
                    alpha0: 0.5,
                    rho: 0.6,
                },
            ],
            m_runs: 10,
            n_steps: 2_000,
            burn_in: 100,
            base_seed: 9,
            init: InitSpec::Gaussian { cov_scale: 25.0 },
            out_dir: None,
            emit_plots: false,
            checkpoints: Some(vec![50, 500, 2_000]),
        };
        let s = run_ensemble(&cfg).unwrap();
        (cfg, s)
    }

    #[test]
    fn summary_csv_shape_and_determinism() {
        let (_, s) = summary();
        let dir = tmpdir("summary");
        let p1 = dir.join("summary1.csv");
        let p2 = dir.join("summary2.csv");
        write_summary_csv(&p1, &s).unwrap();
        write_summary_csv(&p2, &s).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let (header, rows) = read_csv(&p1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(
            header,
            [
                "a",
                "rho",
                "alpha0",
                "M",
                "N",
                "N0",
                "mean_1",
                "mean_2",
                "bias_pred_1",
                "bias_pred_2",
                "cov_11",
                "cov_12",
                "cov_21",
                "cov_22",
                "trace_cov_times_N",
                "trace_sigma_pr",
                "mse",
                "mse_pred"
            ]
        );
        for row in &rows {
            assert_eq!(row.len(), header.len());
            assert_eq!(row[0], "0.7");
            // Every numeric cell parses back.
            for cell in row {
                cell.parse::<f64>().unwrap();
            }
        }
    }

    #[test]
    fn curves_csv_empty_cells_before_burn_in() {
        let (_, s) = summary();
        let dir = tmpdir("curves");
        let p = dir.join("curves.csv");
        write_curves_csv(&p, &s).unwrap();
        let (header, rows) = read_csv(&p).unwrap();
        assert_eq!(
            header,
            [
                "rho",
                "n",
                "mse_raw",
                "mse_pr",
                "mse_pr_pred",
                "finite_time_bound"
            ]
        );
        assert_eq!(rows.len(), 6); // 2 grid points x 3 checkpoints
        let first = &rows[0];
        assert_eq!(first[1], "50");
        assert!(first[3].is_empty(), "no PR column before burn-in");
        assert!(!first[5].is_empty(), "bound available for the benchmark");
        assert!(rows[1][3].parse::<f64>().unwrap() > 0.0);
    }

    #[test]
    fn finals_and_ratios_csv() {
        let (cfg, s) = summary();
        let model = cfg.model.build().unwrap();
        let dir = tmpdir("finals");
        let pf = dir.join("finals.csv");
        write_finals_csv(&pf, &s).unwrap();
        let (_, rows) = read_csv(&pf).unwrap();
        assert_eq!(rows.len(), 20); // 2 grid points x 10 runs

        let table = compare_theory(&s, &model).unwrap();
        let pr = dir.join("ratios.csv");
        write_ratios_csv(&pr, &table).unwrap();
        let (header, rows) = read_csv(&pr).unwrap();
        assert_eq!(rows.len(), 2);
        let bias_idx = header.iter().position(|h| h == "bias_ratio").unwrap();
        for row in &rows {
            row[bias_idx].parse::<f64>().unwrap();
        }
    }
}
