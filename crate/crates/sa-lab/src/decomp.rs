//! Pathwise construction and verification of the Metivier-Priouret noise
//! decomposition for linear models:
//! Delta_{k+1} = W_{k+2} - T_{k+2} + T_{k+1} - alpha_{k+1} Upsilon_{k+2},
//! together with the parameter-independent martingale terms W*.

use crate::engine::TrajectoryRecord;
use crate::linear::{LinearError, LinearSAModel};
use crate::markov::{MarkovError, StateMatrixTable, StateVectorTable};
use crate::stepsize::StepSizeSchedule;
use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("trajectory is missing its full state path or unthinned iterates")]
    MissingPath,
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// Zero-mean Poisson solutions for the affine forcing f(theta, x) =
/// A(x) theta - b(x): f_hat(theta, x) = A_hat(x) theta + b_hat(x).
#[derive(Debug, Clone)]
pub struct HatF {
    pub a_hat: StateMatrixTable,
    pub b_hat: StateVectorTable,
}

impl HatF {
    #[inline]
    pub fn eval(&self, theta: &DVector<f64>, x: usize) -> DVector<f64> {
        self.a_hat.get(x) * theta + self.b_hat.get(x)
    }
}

/// Solves Poisson's equation for the model's affine forcing. b_hat is the
/// solution for the negated b-table so that f_hat stays affine in theta with
/// the model's sign convention.
pub fn hat_f(model: &LinearSAModel) -> Result<HatF, DecompError> {
    let chain = model.chain();
    let a_hat = chain.poisson_solve_matrix(model.a_table())?;
    let neg_b: Vec<DVector<f64>> = (0..chain.n_states())
        .map(|x| -model.b_table().get(x))
        .collect();
    let b_hat = chain.poisson_solve_vector(&StateVectorTable::new(neg_b)?)?;
    Ok(HatF { a_hat, b_hat })
}

/// Closed-form coupling term:
/// Upsilon = -A_hat(x_next) (A(x_prev) theta - b(x_prev)).
pub fn upsilon_linear(
    model: &LinearSAModel,
    hat: &HatF,
    theta: &DVector<f64>,
    x_prev: usize,
    x_next: usize,
) -> DVector<f64> {
    -(hat.a_hat.get(x_next) * model.update(theta, x_prev))
}

/// Per-step terms of the noise decomposition along one trajectory.
#[derive(Debug, Clone)]
pub struct DecompositionTerms {
    /// Delta_{k+1} = f(theta_k, Phi_{k+1}) - fbar(theta_k), for k = 0..K-1.
    pub delta: Vec<DVector<f64>>,
    /// Martingale difference W_{k+2}.
    pub w: Vec<DVector<f64>>,
    /// Telescoping term T_{k+1} = f_hat(theta_k, Phi_{k+1}).
    pub t: Vec<DVector<f64>>,
    /// Finite-difference coupling Upsilon_{k+2}.
    pub upsilon: Vec<DVector<f64>>,
    /// Closed-form coupling evaluated from the affine representation.
    pub upsilon_closed: Vec<DVector<f64>>,
    /// Coupling evaluated at theta*: Upsilon*_{k+2}.
    pub upsilon_star: Vec<DVector<f64>>,
    /// Parameter-independent martingale difference W*_{k+2}.
    pub w_star: Vec<DVector<f64>>,
    /// Residual of the decomposition identity at each step.
    pub residual: Vec<f64>,
    /// 1 + ||theta_k|| scale for relative residual checks.
    pub theta_scale: Vec<f64>,
    /// The states Phi_{k+1} visited (for conditional-mean diagnostics).
    pub states_mid: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompStats {
    pub n_terms: usize,
    pub max_residual: f64,
    pub max_relative_residual: f64,
    pub max_upsilon_gap: f64,
    pub mean_upsilon_star: Vec<f64>,
    pub mean_sq_w: f64,
}

impl DecompositionTerms {
    pub fn stats(&self) -> DecompStats {
        let d = self.delta[0].len();
        let mut mean_upsilon_star = DVector::zeros(d);
        let mut mean_sq_w = 0.0;
        let mut max_residual: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        let mut max_gap: f64 = 0.0;
        for k in 0..self.delta.len() {
            max_residual = max_residual.max(self.residual[k]);
            max_rel = max_rel.max(self.residual[k] / self.theta_scale[k]);
            max_gap = max_gap.max((&self.upsilon[k] - &self.upsilon_closed[k]).amax());
            mean_upsilon_star += &self.upsilon_star[k];
            mean_sq_w += self.w[k].norm_squared();
        }
        let nf = self.delta.len() as f64;
        DecompStats {
            n_terms: self.delta.len(),
            max_residual,
            max_relative_residual: max_rel,
            max_upsilon_gap: max_gap,
            mean_upsilon_star: (mean_upsilon_star / nf).iter().copied().collect(),
            mean_sq_w: mean_sq_w / nf,
        }
    }
}

/// Decomposes the noise along a fully retained trajectory. Conditional
/// expectations are computed exactly through the transition matrix.
pub fn decompose_path(
    model: &LinearSAModel,
    schedule: &StepSizeSchedule,
    trajectory: &TrajectoryRecord,
) -> Result<DecompositionTerms, DecompError> {
    let path = trajectory.path.as_ref().ok_or(DecompError::MissingPath)?;
    let thetas = trajectory
        .full_iterates
        .as_ref()
        .ok_or(DecompError::MissingPath)?;
    if path.len() != thetas.len() || path.len() < 3 {
        return Err(DecompError::MissingPath);
    }
    let hat = hat_f(model)?;
    let chain = model.chain();
    let p = chain.transition_matrix();
    let n_states = chain.n_states();
    let alphas = schedule.alpha_table(trajectory.n_steps);

    // Precompute (P f_hat)(theta, y) = sum_z P(y,z) f_hat(theta, z) through
    // the kernel applied to the affine pieces.
    let mut p_a_hat = Vec::with_capacity(n_states);
    let mut p_b_hat = Vec::with_capacity(n_states);
    for y in 0..n_states {
        let (r, c) = hat.a_hat.shape();
        let mut am = nalgebra::DMatrix::zeros(r, c);
        let mut bv = DVector::zeros(model.dim());
        for z in 0..n_states {
            am += p[(y, z)] * hat.a_hat.get(z);
            bv.axpy(p[(y, z)], hat.b_hat.get(z), 1.0);
        }
        p_a_hat.push(am);
        p_b_hat.push(bv);
    }
    let p_hat_eval =
        |theta: &DVector<f64>, y: usize| -> DVector<f64> { &p_a_hat[y] * theta + &p_b_hat[y] };

    let k_max = path.len() - 2; // k runs over 0..k_max-1, needing Phi_{k+2}
    let mut terms = DecompositionTerms {
        delta: Vec::with_capacity(k_max),
        w: Vec::with_capacity(k_max),
        t: Vec::with_capacity(k_max),
        upsilon: Vec::with_capacity(k_max),
        upsilon_closed: Vec::with_capacity(k_max),
        upsilon_star: Vec::with_capacity(k_max),
        w_star: Vec::with_capacity(k_max),
        residual: Vec::with_capacity(k_max),
        theta_scale: Vec::with_capacity(k_max),
        states_mid: Vec::with_capacity(k_max),
    };
    let theta_star = model.thetastar();
    for k in 0..k_max {
        let theta_k = &thetas[k];
        let theta_k1 = &thetas[k + 1];
        let x1 = path[k + 1];
        let x2 = path[k + 2];
        let alpha_k1 = alphas[k]; // alpha_{k+1}

        let delta = model.update(theta_k, x1) - model.mean_field(theta_k);
        let t_cur = hat.eval(theta_k, x1);
        let t_next = hat.eval(theta_k1, x2);
        let w = hat.eval(theta_k, x2) - p_hat_eval(theta_k, x1);
        let upsilon = -(hat.eval(theta_k1, x2) - hat.eval(theta_k, x2)) / alpha_k1;
        let upsilon_closed = upsilon_linear(model, &hat, theta_k, x1, x2);
        let upsilon_star = upsilon_linear(model, &hat, theta_star, x1, x2);
        let w_star = hat.eval(theta_star, x2) - p_hat_eval(theta_star, x1);

        let residual = (&delta - (&w - &t_next + &t_cur - alpha_k1 * &upsilon)).amax();
        terms.residual.push(residual);
        terms.theta_scale.push(1.0 + theta_k.norm());
        terms.delta.push(delta);
        terms.w.push(w);
        terms.t.push(t_cur);
        terms.upsilon.push(upsilon);
        terms.upsilon_closed.push(upsilon_closed);
        terms.upsilon_star.push(upsilon_star);
        terms.w_star.push(w_star);
        terms.states_mid.push(x1);
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_sa, RecordSpec, SARunConfig, ThetaInit};
    use crate::markov::PathInit;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn run_benchmark(
        a: f64,
        rho: f64,
        n: u64,
        seed: u64,
    ) -> (LinearSAModel, StepSizeSchedule, TrajectoryRecord) {
        let model = LinearSAModel::two_state_benchmark(a).unwrap();
        let schedule = StepSizeSchedule::new(0.5, rho).unwrap();
        let cfg = SARunConfig {
            chain: model.chain().clone(),
            schedule: schedule.clone(),
            n_steps: n,
            burn_in: 0,
            theta_init: ThetaInit::Fixed(DVector::from_row_slice(&[3.0, -2.0])),
            seed,
            record: RecordSpec::FinalOnly,
            path_init: PathInit::Stationary,
            keep_path: true,
        };
        let rec = run_sa(model.update_fn(), &cfg).unwrap();
        (model, schedule, rec)
    }

    #[test]
    fn hat_f_additive_model_has_zero_a_hat() {
        let model = LinearSAModel::two_state_benchmark_additive(0.7).unwrap();
        let hat = hat_f(&model).unwrap();
        assert!(hat.a_hat.get(0).amax() < 1e-14);
        assert!(hat.a_hat.get(1).amax() < 1e-14);
    }

    #[test]
    fn hat_f_benchmark_structure() {
        // A_hat(x) = g_hat(x) (A1 - A0) with g_hat the scalar Poisson
        // solution (-5/6, 5/6) at a = 0.7.
        let model = LinearSAModel::two_state_benchmark(0.7).unwrap();
        let hat = hat_f(&model).unwrap();
        let diff = nalgebra::DMatrix::from_row_slice(2, 2, &[6.0, 0.0, -4.0, 6.0]);
        let expect0: nalgebra::DMatrix<f64> = -5.0 / 6.0 * &diff;
        let expect1: nalgebra::DMatrix<f64> = 5.0 / 6.0 * &diff;
        assert!((hat.a_hat.get(0) - expect0).amax() < 1e-12);
        assert!((hat.a_hat.get(1) - expect1).amax() < 1e-12);
    }

    #[test]
    fn hat_f_solves_poisson_for_random_theta() {
        let model = LinearSAModel::two_state_benchmark(0.7).unwrap();
        let hat = hat_f(&model).unwrap();
        let chain = model.chain();
        let p = chain.transition_matrix();
        for trial in 0..5 {
            let theta = DVector::from_fn(2, |i, _| ((trial * 7 + i * 3) as f64 * 0.37).sin() * 4.0);
            for x in 0..2 {
                // (P f_hat)(x) = f_hat(x) - f(theta,x) + fbar(theta)
                let mut lhs = DVector::zeros(2);
                for z in 0..2 {
                    lhs.axpy(p[(x, z)], &hat.eval(&theta, z), 1.0);
                }
                let rhs = hat.eval(&theta, x) - model.update(&theta, x) + model.mean_field(&theta);
                assert!((lhs - rhs).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn hat_f_affine_in_theta() {
        let model = LinearSAModel::two_state_benchmark(0.7).unwrap();
        let hat = hat_f(&model).unwrap();
        let theta = DVector::from_row_slice(&[1.5, -0.5]);
        for x in 0..2 {
            let lhs = hat.eval(&(2.0 * &theta), x) - hat.eval(&theta, x);
            let rhs = hat.a_hat.get(x) * &theta;
            assert!((lhs - rhs).amax() < 1e-13);
        }
    }

    #[test]
    fn identity_residual_and_upsilon_forms_agree() {
        let (model, schedule, rec) = run_benchmark(0.7, 0.6, 20_000, 42);
        let terms = decompose_path(&model, &schedule, &rec).unwrap();
        for k in 0..terms.delta.len() {
            assert!(
                terms.residual[k] <= 1e-9 * terms.theta_scale[k],
                "k = {k}: residual {}",
                terms.residual[k]
            );
            assert!(
                (&terms.upsilon[k] - &terms.upsilon_closed[k]).amax() <= 1e-9,
                "k = {k}"
            );
        }
    }

    #[test]
    fn additive_model_has_zero_upsilon() {
        let model = LinearSAModel::two_state_benchmark_additive(0.7).unwrap();
        let schedule = StepSizeSchedule::new(0.5, 0.6).unwrap();
        let cfg = SARunConfig {
            chain: model.chain().clone(),
            schedule: schedule.clone(),
            n_steps: 5_000,
            burn_in: 0,
            theta_init: ThetaInit::Fixed(DVector::from_row_slice(&[3.0, -2.0])),
            seed: 9,
            record: RecordSpec::FinalOnly,
            path_init: PathInit::Stationary,
            keep_path: true,
        };
        let rec = run_sa(model.update_fn(), &cfg).unwrap();
        let terms = decompose_path(&model, &schedule, &rec).unwrap();
        for u in &terms.upsilon {
            assert!(u.amax() < 1e-10);
        }
    }

    #[test]
    fn upsilon_closed_hand_value() {
        // theta = theta*, (x_prev, x_next) = (0, 1):
        // -A_hat(1)(A0 theta* - b0) = -(5/6)(A1 - A0)(-4, -2).
        let model = LinearSAModel::two_state_benchmark(0.7).unwrap();
        let hat = hat_f(&model).unwrap();
        let u = upsilon_linear(&model, &hat, model.thetastar(), 0, 1);
        let diff = nalgebra::DMatrix::from_row_slice(2, 2, &[6.0, 0.0, -4.0, 6.0]);
        let expect: DVector<f64> = -(5.0 / 6.0) * diff * DVector::from_row_slice(&[-4.0, -2.0]);
        assert!((u - expect).amax() < 1e-12);
    }

    #[test]
    fn empirical_upsilon_star_mean_near_theory() {
        // Stationary window; batch-means standard errors.
        let (model, schedule, rec) = run_benchmark(0.7, 0.6, 1_000_000, 2024);
        let terms = decompose_path(&model, &schedule, &rec).unwrap();
        let theory = model.theory_upsilon_star().unwrap();
        let n = terms.upsilon_star.len();
        let n_batches = 1000;
        let batch = n / n_batches;
        for i in 0..2 {
            let batch_means: Vec<f64> = (0..n_batches)
                .map(|b| {
                    terms.upsilon_star[b * batch..(b + 1) * batch]
                        .iter()
                        .map(|u| u[i])
                        .sum::<f64>()
                        / batch as f64
                })
                .collect();
            let mean = batch_means.iter().sum::<f64>() / n_batches as f64;
            let var = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
                / (n_batches - 1) as f64;
            let se = (var / n_batches as f64).sqrt();
            assert!(
                (mean - theory[i]).abs() <= 3.0 * se,
                "component {i}: mean {mean}, theory {}, se {se}",
                theory[i]
            );
        }
    }

    #[test]
    fn w_star_conditional_means_vanish() {
        let (model, schedule, rec) = run_benchmark(0.7, 0.6, 200_000, 5);
        let terms = decompose_path(&model, &schedule, &rec).unwrap();
        for y in 0..model.chain().n_states() {
            let selected: Vec<&DVector<f64>> = terms
                .w_star
                .iter()
                .zip(&terms.states_mid)
                .filter(|(_, &s)| s == y)
                .map(|(w, _)| w)
                .collect();
            let m = selected.len() as f64;
            for i in 0..2 {
                let mean = selected.iter().map(|w| w[i]).sum::<f64>() / m;
                let var = selected.iter().map(|w| (w[i] - mean).powi(2)).sum::<f64>() / (m - 1.0);
                let se = (var / m).sqrt();
                assert!(
                    mean.abs() <= 3.0 * se,
                    "state {y} component {i}: mean {mean}, se {se}"
                );
            }
        }
    }

    #[test]
    fn quadratic_variation_tracks_sigma_w() {
        // Start at theta* so the parameter-dependent correction is small.
        let model = LinearSAModel::two_state_benchmark(0.7).unwrap();
        let schedule = StepSizeSchedule::new(0.5, 0.6).unwrap();
        let cfg = SARunConfig {
            chain: model.chain().clone(),
            schedule: schedule.clone(),
            n_steps: 400_000,
            burn_in: 0,
            theta_init: ThetaInit::Fixed(model.thetastar().clone()),
            seed: 31,
            record: RecordSpec::FinalOnly,
            path_init: PathInit::Stationary,
            keep_path: true,
        };
        let rec = run_sa(model.update_fn(), &cfg).unwrap();
        let terms = decompose_path(&model, &schedule, &rec).unwrap();
        let qv = terms.stats().mean_sq_w;
        let trace = model.theory_sigma_pr().unwrap().sigma_w.trace();
        assert!(
            (qv - trace).abs() <= 0.15 * trace,
            "quadratic variation {qv} vs trace {trace}"
        );
    }

    #[test]
    fn telescoping_sum_is_exact() {
        let (model, schedule, rec) = run_benchmark(0.7, 0.6, 2_000, 17);
        let _ = (&model, &schedule);
        let path = rec.path.as_ref().unwrap();
        let thetas = rec.full_iterates.as_ref().unwrap();
        let hat = hat_f(&model).unwrap();
        // sum_k (-T_{k+2} + T_{k+1}) = T_1' - T_last' where the T sequence
        // interleaves theta_k with Phi_{k+1} and theta_{k+1} with Phi_{k+2}.
        let k_max = path.len() - 2;
        let mut acc = DVector::zeros(2);
        for k in 0..k_max {
            let t_cur = hat.eval(&thetas[k], path[k + 1]);
            let t_next = hat.eval(&thetas[k + 1], path[k + 2]);
            acc += t_cur - t_next;
        }
        let direct = hat.eval(&thetas[0], path[1]) - hat.eval(&thetas[k_max], path[k_max + 1]);
        assert_abs_diff_eq!((acc - direct).amax(), 0.0, epsilon = 1e-9);
    }
}
