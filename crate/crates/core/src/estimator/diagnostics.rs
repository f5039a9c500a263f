//! Per-iteration traces of an estimator run and the deterministic checks
//! that can be evaluated on them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ConfidenceEllipsoid;
use crate::error::{Error, Result};
use crate::linalg::{spd_log_det, weighted_norm_sq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Test passed and a truncated sample was drawn.
    CensorAware,
    /// Test failed; the gradient uses `z = mu`.
    CensorOblivious,
    /// Test passed but rejection sampling ran out of attempts; `z = mu`.
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub branch: Branch,
    pub sample_attempts: u64,
    pub grad_norm: f64,
    /// `<g_i, A_i - A_*>`, only with ground truth.
    pub inner_with_error: Option<f64>,
    /// `||(A_i - A_*) x_{t_i}||^2`, only with ground truth.
    pub prediction_error_sq: Option<f64>,
    /// `tr(g_i S_i^{-1} g_i^T)`.
    pub grad_energy: f64,
    /// `x_{t_i}^T S_i^{-1} x_{t_i}`.
    pub leverage: f64,
    pub lambda: f64,
    /// `||A_{i+1} - A_0||_{S_0}^2` after projection.
    pub ellipsoid_distance_sq: f64,
    /// `||S_i^{-1} S_i - I||_F` after the inverse update.
    pub inverse_drift: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub censor_aware: usize,
    pub censor_oblivious: usize,
    pub exhausted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub eta: f64,
    pub records: Vec<IterationRecord>,
}

impl RunDiagnostics {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `sum_i (2 eta <g_i, A_i - A_*> - ||(A_i - A_*) x_{t_i}||^2)`; `None`
    /// if any record lacks ground-truth terms.
    pub fn e1(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| Some(2.0 * self.eta * r.inner_with_error? - r.prediction_error_sq?))
            .sum()
    }

    /// `sum_i tr(g_i S_i^{-1} g_i^T)`.
    pub fn e2(&self) -> f64 {
        self.records.iter().map(|r| r.grad_energy).sum()
    }

    pub fn leverage_sum(&self) -> f64 {
        self.records.iter().map(|r| r.leverage).sum()
    }

    pub fn branch_counts(&self) -> BranchCounts {
        let mut c = BranchCounts::default();
        for r in &self.records {
            match r.branch {
                Branch::CensorAware => c.censor_aware += 1,
                Branch::CensorOblivious => c.censor_oblivious += 1,
                Branch::Exhausted => c.exhausted += 1,
            }
        }
        c
    }

    pub fn max_ellipsoid_distance_sq(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.ellipsoid_distance_sq)
            .fold(0.0, f64::max)
    }

    pub fn max_inverse_drift(&self) -> f64 {
        self.records.iter().map(|r| r.inverse_drift).fold(0.0, f64::max)
    }

    /// Records are strictly increasing in `t`.
    pub fn is_time_ordered(&self) -> bool {
        self.records.windows(2).all(|w| w[0].t < w[1].t)
    }
}

/// Slack of the generic online-Newton bound
/// `||A_hat - A_*||_{S_N}^2 <= 1 - E1 + eta^2 E2`.
///
/// Requires `A_* in K`; the caller compares the slack with
/// [`generic_bound_tolerance`].
pub fn check_generic_bound(
    diag: &RunDiagnostics,
    a_hat: &DMatrix<f64>,
    a_star: &DMatrix<f64>,
    ellipsoid: &ConfidenceEllipsoid,
    sigma_n: &DMatrix<f64>,
) -> Result<f64> {
    let distance_sq = ellipsoid.distance_sq(a_star);
    if distance_sq > 1.0 {
        return Err(Error::BoundInapplicable { distance_sq });
    }
    let e1 = diag
        .e1()
        .ok_or_else(|| Error::InvalidConfig("diagnostics were recorded without ground truth".into()))?;
    let rhs = 1.0 - e1 + diag.eta * diag.eta * diag.e2();
    Ok(rhs - weighted_norm_sq(&(a_hat - a_star), sigma_n))
}

/// `1e-6 (1 + |E1| + eta^2 E2)`: the bound holds when slack >= -tolerance.
pub fn generic_bound_tolerance(diag: &RunDiagnostics) -> f64 {
    let e1 = diag.e1().unwrap_or(0.0);
    1e-6 * (1.0 + e1.abs() + diag.eta * diag.eta * diag.e2())
}

/// Determinant potential: `sum_i x_i^T S_i^{-1} x_i <= ln det S_N - d ln omega`.
pub fn check_potential(diag: &RunDiagnostics, sigma_n: &DMatrix<f64>, omega: f64) -> bool {
    potential_margin(diag, sigma_n, omega).is_some_and(|m| m >= -1e-8)
}

/// Right-hand side minus left-hand side of the potential inequality.
pub fn potential_margin(diag: &RunDiagnostics, sigma_n: &DMatrix<f64>, omega: f64) -> Option<f64> {
    if !(omega > 0.0) {
        return None;
    }
    let d = sigma_n.nrows() as f64;
    let log_det = spd_log_det(sigma_n)?;
    let rhs = d * (log_det / d + (1.0 / omega).ln());
    Some(rhs - diag.leverage_sum())
}
