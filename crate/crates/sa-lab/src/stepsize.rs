//! Power-law step-size schedules alpha_n = alpha0 * n^(-rho) and the
//! partial-sum functionals tau_n and tau^b_n used by the bias-decay theory.

use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepSizeError {
    #[error("domain error: {0}")]
    DomainError(String),
}

/// Partial sums of alpha are memoized at checkpoints every CHUNK steps so a
/// tau query costs at most one chunk of summation after warm-up.
const CHUNK: u64 = 1 << 16;

/// alpha_n = alpha0 * n^(-rho) with alpha0 > 0 and rho in (0,1).
///
/// Cloning shares the internal partial-sum caches.
#[derive(Debug, Clone)]
pub struct StepSizeSchedule {
    alpha0: f64,
    rho: f64,
    tau_checkpoints: Arc<Mutex<Vec<f64>>>,
    alpha_table: Arc<Mutex<Arc<Vec<f64>>>>,
}

impl PartialEq for StepSizeSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.alpha0 == other.alpha0 && self.rho == other.rho
    }
}

impl StepSizeSchedule {
    pub fn new(alpha0: f64, rho: f64) -> Result<Self, StepSizeError> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(StepSizeError::DomainError(format!(
                "alpha0 = {alpha0} must be positive"
            )));
        }
        // rho = 0 and rho = 1 are rejected: the bias/covariance theory
        // implemented here requires the open interval.
        if !(rho > 0.0 && rho < 1.0) {
            return Err(StepSizeError::DomainError(format!(
                "rho = {rho} must lie in the open interval (0,1)"
            )));
        }
        Ok(Self {
            alpha0,
            rho,
            tau_checkpoints: Arc::new(Mutex::new(vec![0.0])),
            alpha_table: Arc::new(Mutex::new(Arc::new(Vec::new()))),
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// alpha_n for n >= 1.
    pub fn alpha(&self, n: u64) -> Result<f64, StepSizeError> {
        if n < 1 {
            return Err(StepSizeError::DomainError(format!(
                "alpha({n}): n must be >= 1"
            )));
        }
        Ok(self.alpha_unchecked(n))
    }

    #[inline]
    fn alpha_unchecked(&self, n: u64) -> f64 {
        self.alpha0 * (n as f64).powf(-self.rho)
    }

    /// Shared table of [alpha_1, ..., alpha_n], extended on demand; the hot
    /// recursion indexes this instead of calling powf per step.
    pub fn alpha_table(&self, n: u64) -> Arc<Vec<f64>> {
        let mut guard = self.alpha_table.lock().unwrap();
        if (guard.len() as u64) < n {
            let mut table = Vec::with_capacity(n as usize);
            table.extend_from_slice(guard.as_slice());
            for k in guard.len() as u64 + 1..=n {
                table.push(self.alpha_unchecked(k));
            }
            *guard = Arc::new(table);
        }
        Arc::clone(&guard)
    }

    /// Exact partial sum tau_n = sum_{k=1}^n alpha_k.
    pub fn tau(&self, n: u64) -> f64 {
        let j = n / CHUNK;
        let mut checkpoints = self.tau_checkpoints.lock().unwrap();
        while (checkpoints.len() as u64) <= j {
            let i = checkpoints.len() as u64;
            let mut acc = *checkpoints.last().unwrap();
            for k in (i - 1) * CHUNK + 1..=i * CHUNK {
                acc += self.alpha_unchecked(k);
            }
            checkpoints.push(acc);
        }
        let mut acc = checkpoints[j as usize];
        drop(checkpoints);
        for k in j * CHUNK + 1..=n {
            acc += self.alpha_unchecked(k);
        }
        acc
    }

    /// Closed-form upper bound on tau_n:
    /// tau^b_n = alpha0 * (1 + (n^(1-rho) - 1) / (1-rho)), n >= 1.
    pub fn tau_b(&self, n: u64) -> Result<f64, StepSizeError> {
        if n < 1 {
            return Err(StepSizeError::DomainError(format!(
                "tau_b({n}): n must be >= 1"
            )));
        }
        let e = 1.0 - self.rho;
        Ok(self.alpha0 * (1.0 + ((n as f64).powf(e) - 1.0) / e))
    }
}
