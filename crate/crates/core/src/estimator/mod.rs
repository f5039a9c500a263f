//! Warmup ellipsoid plus the online second-order estimator with switching
//! gradients.
//!
//! The estimator consumes observed pairs once, in time order. At each pair
//! it asks a sampling Test whether the predicted mean has enough mass on
//! the censoring set. If so, it draws a truncated sample and uses the
//! censor-aware gradient; if not, it falls back to the censor-oblivious
//! one. Steps are preconditioned by the running covariate outer-product sum
//! and projected back onto the warmup ellipsoid.

pub mod baselines;
pub mod diagnostics;
pub mod projection;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{frobenius_inner, spd_inverse, sym_eigen_extremes, weighted_norm_sq};
use crate::rng::NormalStream;
use crate::sets::ObservableSet;
use crate::simulator::{extract_pairs, split_pairs, CensoredView, Pair, PairedDataset};
use crate::truncated::{rejection_sample, test_survival, SampleOutcome, TestConfig};

pub use diagnostics::{
    check_generic_bound, check_potential, generic_bound_tolerance, potential_margin, Branch,
    BranchCounts, IterationRecord, RunDiagnostics,
};
pub use projection::{kkt_residual, project_ellipsoid, Projection};

/// Covariate matrices with a larger condition number are rejected.
pub const MAX_WARMUP_CONDITION: f64 = 1e12;

/// `{A : ||A - center||_shape <= 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipsoid {
    pub center: DMatrix<f64>,
    pub shape: DMatrix<f64>,
}

impl ConfidenceEllipsoid {
    pub fn new(center: DMatrix<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let d = center.ncols();
        if !shape.is_square() {
            return Err(Error::InvalidConfig("ellipsoid shape must be square".into()));
        }
        check_dim(d, shape.nrows())?;
        if (&shape - shape.transpose()).abs().max() > 1e-10 * shape.abs().max().max(1.0) {
            return Err(Error::InvalidConfig("ellipsoid shape must be symmetric".into()));
        }
        let (min, _) = sym_eigen_extremes(&shape);
        if min < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "ellipsoid shape must be positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(Self { center, shape })
    }

    pub(crate) fn norm_sq_of_offset(&self, offset: &DMatrix<f64>) -> f64 {
        weighted_norm_sq(offset, &self.shape)
    }

    /// `||A - A_0||_{S_0}^2`.
    pub fn distance_sq(&self, a: &DMatrix<f64>) -> f64 {
        self.norm_sq_of_offset(&(a - &self.center))
    }

    pub fn contains(&self, a: &DMatrix<f64>) -> bool {
        self.distance_sq(a) <= 1.0
    }

    /// Smallest eigenvalue of the shape matrix.
    pub fn omega(&self) -> f64 {
        sym_eigen_extremes(&self.shape).0
    }
}

/// Tuning of the estimator. `horizon` feeds the Test's draw count and the
/// rejection budget; when unset, the trajectory length is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SonSgConfig {
    pub alpha: f64,
    pub c_eta: u32,
    pub c_gamma: u32,
    pub c_s: f64,
    pub horizon: Option<usize>,
    pub max_attempts: Option<u64>,
    pub projection_tol: f64,
}

impl Default for SonSgConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            c_eta: 1,
            c_gamma: 2,
            c_s: 2.0,
            horizon: None,
            max_attempts: None,
            projection_tol: 1e-10,
        }
    }
}

impl SonSgConfig {
    pub fn validate(&self) -> Result<()> {
        TestConfig::new(self.alpha, self.c_gamma, self.horizon.unwrap_or(2))?;
        if !(self.c_s > 0.0 && self.c_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("c_s must be positive, got {}", self.c_s)));
        }
        if !(self.projection_tol > 0.0) {
            return Err(Error::InvalidConfig("projection_tol must be positive".into()));
        }
        if self.max_attempts == Some(0) {
            return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Step size `(2 / alpha)^c_eta`.
    pub fn eta(&self) -> f64 {
        (2.0 / self.alpha).powi(self.c_eta as i32)
    }

    pub fn gamma(&self) -> f64 {
        (self.alpha / 2.0).powi(self.c_gamma as i32)
    }

    /// Warmup scale `c_s (sqrt(ln(1/alpha)) + 1)`.
    pub fn warmup_scale(&self) -> f64 {
        self.c_s * ((1.0 / self.alpha).ln().sqrt() + 1.0)
    }

    pub fn test_config(&self, default_horizon: usize) -> Result<TestConfig> {
        TestConfig::new(self.alpha, self.c_gamma, self.horizon.unwrap_or(default_horizon))
    }

    pub fn max_attempts_for(&self, test: &TestConfig) -> u64 {
        self.max_attempts.unwrap_or_else(|| test.default_max_attempts())
    }
}

/// Condition number of `sum x x^T` over a dataset.
pub fn covariate_condition(data: &PairedDataset) -> f64 {
    let Some(first) = data.pairs.first() else {
        return f64::INFINITY;
    };
    let d = first.x.len();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for p in &data.pairs {
        gram.ger(1.0, &p.x, &p.x, 1.0);
    }
    let (min, max) = sym_eigen_extremes(&gram);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Least-squares center and scaled-covariance shape from the warmup half.
pub fn warmup(data: &PairedDataset, cfg: &SonSgConfig) -> Result<ConfidenceEllipsoid> {
    let first = data.pairs.first().ok_or(Error::InsufficientPairs {
        found: 0,
        required: 1,
    })?;
    let (d, n) = (first.x.len(), first.y.len());
    if data.len() < d {
        return Err(Error::InsufficientPairs {
            found: data.len(),
            required: d,
        });
    }
    let mut cross = DMatrix::<f64>::zeros(n, d);
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for p in &data.pairs {
        check_dim(d, p.x.len())?;
        check_dim(n, p.y.len())?;
        cross.ger(1.0, &p.y, &p.x, 1.0);
        gram.ger(1.0, &p.x, &p.x, 1.0);
    }
    let (min, max) = sym_eigen_extremes(&gram);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_WARMUP_CONDITION) {
        return Err(Error::InsufficientExcitation { condition });
    }
    let inv = spd_inverse(&gram).ok_or(Error::InsufficientExcitation { condition })?;
    let center = cross * inv;
    let shape = gram / (cfg.warmup_scale() * data.len() as f64);
    ConfidenceEllipsoid::new(center, shape)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedGradient {
    pub g: DMatrix<f64>,
    pub branch: Branch,
    pub sample_attempts: u64,
}

/// `g = (z - y) x^T`, where `z` is a truncated sample from N(mu, I, S) if
/// the survival Test passes and sampling succeeds, and `z = mu` otherwise.
pub fn test_and_switch_grad(
    mu: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    set: &ObservableSet,
    test: &TestConfig,
    max_attempts: u64,
    rng: &mut NormalStream,
) -> Result<SwitchedGradient> {
    check_dim(set.dim(), mu.len())?;
    check_dim(mu.len(), y.len())?;
    let (z, branch, sample_attempts) = if test_survival(mu.as_slice(), set, test, rng)? {
        match rejection_sample(mu.as_slice(), set, rng, max_attempts)? {
            SampleOutcome::Accepted { value, attempts } => {
                (DVector::from_vec(value), Branch::CensorAware, attempts)
            }
            SampleOutcome::Exhausted { attempts } => (mu.clone(), Branch::Exhausted, attempts),
        }
    } else {
        (mu.clone(), Branch::CensorOblivious, 0)
    };
    Ok(SwitchedGradient {
        g: (z - y) * x.transpose(),
        branch,
        sample_attempts,
    })
}

/// Iterate, accumulated covariance and its maintained inverse.
#[derive(Clone, Debug)]
pub struct EstimatorState {
    pub iteration: usize,
    pub a: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    updates_since_refresh: usize,
}

/// Drift of the maintained inverse that forces a refactorization.
pub const INVERSE_DRIFT_LIMIT: f64 = 1e-8;

impl EstimatorState {
    pub fn new(ellipsoid: &ConfidenceEllipsoid) -> Result<Self> {
        let sigma_inv = spd_inverse(&ellipsoid.shape).ok_or_else(|| {
            Error::InvalidConfig("ellipsoid shape must be positive definite".into())
        })?;
        Ok(Self {
            iteration: 0,
            a: ellipsoid.center.clone(),
            sigma: ellipsoid.shape.clone(),
            sigma_inv,
            updates_since_refresh: 0,
        })
    }

    pub fn inverse_drift(&self) -> f64 {
        let d = self.sigma.nrows();
        (&self.sigma_inv * &self.sigma - DMatrix::<f64>::identity(d, d)).norm()
    }

    fn refresh_inverse(&mut self) -> Result<()> {
        self.sigma_inv = spd_inverse(&self.sigma)
            .ok_or_else(|| Error::InvalidConfig("accumulated covariance lost definiteness".into()))?;
        self.updates_since_refresh = 0;
        Ok(())
    }

    /// Adds `x x^T`, updating the inverse by Sherman-Morrison and
    /// refactorizing every `d` updates or on drift. Returns the new drift.
    pub fn add_covariate(&mut self, x: &DVector<f64>) -> Result<f64> {
        let d = self.sigma.nrows();
        self.sigma.ger(1.0, x, x, 1.0);
        let u = &self.sigma_inv * x;
        let denom = 1.0 + x.dot(&u);
        self.sigma_inv.ger(-1.0 / denom, &u, &u, 1.0);
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= d {
            self.refresh_inverse()?;
        }
        let mut drift = self.inverse_drift();
        if drift > INVERSE_DRIFT_LIMIT {
            self.refresh_inverse()?;
            drift = self.inverse_drift();
        }
        Ok(drift)
    }
}

#[derive(Clone, Debug)]
pub struct SonSgRun {
    pub a_hat: DMatrix<f64>,
    pub diagnostics: RunDiagnostics,
    /// `S_N = S_0 + sum_i x_i x_i^T`.
    pub sigma_final: DMatrix<f64>,
}

/// One time-ordered pass over `data`, starting from the ellipsoid center.
///
/// `ground_truth` only feeds the diagnostics; the iterates never see it.
pub fn son_sg(
    ellipsoid: &ConfidenceEllipsoid,
    data: &[Pair],
    cfg: &SonSgConfig,
    test: &TestConfig,
    rng: &mut NormalStream,
    ground_truth: Option<&DMatrix<f64>>,
) -> Result<SonSgRun> {
    cfg.validate()?;
    let eta = cfg.eta();
    let max_attempts = cfg.max_attempts_for(test);
    let mut state = EstimatorState::new(ellipsoid)?;
    let mut diagnostics = RunDiagnostics::new(eta);
    let (n, d) = ellipsoid.center.shape();
    if let Some(a_star) = ground_truth {
        if a_star.shape() != (n, d) {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: a_star.len(),
            });
        }
    }
    let mut last_t = None;

    for pair in data {
        if last_t.is_some_and(|t| pair.t <= t) {
            return Err(Error::InvalidConfig(format!(
                "pairs must be strictly increasing in time; saw t = {} after {}",
                pair.t,
                last_t.unwrap_or_default()
            )));
        }
        last_t = Some(pair.t);
        check_dim(d, pair.x.len())?;

        let mu = &state.a * &pair.x;
        let step = test_and_switch_grad(&mu, &pair.x, &pair.y, &pair.set, test, max_attempts, rng)?;
        let (inner_with_error, prediction_error_sq) = match ground_truth {
            Some(a_star) => {
                let err = &state.a - a_star;
                (
                    Some(frobenius_inner(&step.g, &err)),
                    Some((&err * &pair.x).norm_squared()),
                )
            }
            None => (None, None),
        };

        let inverse_drift = state.add_covariate(&pair.x)?;
        let g_sigma_inv = &step.g * &state.sigma_inv;
        let grad_energy = frobenius_inner(&g_sigma_inv, &step.g);
        let leverage = pair.x.dot(&(&state.sigma_inv * &pair.x));
        let a_tilde = &state.a - &g_sigma_inv * eta;
        let projected = project_ellipsoid(&a_tilde, &state.sigma, ellipsoid, cfg.projection_tol)?;

        diagnostics.records.push(IterationRecord {
            t: pair.t,
            branch: step.branch,
            sample_attempts: step.sample_attempts,
            grad_norm: step.g.norm(),
            inner_with_error,
            prediction_error_sq,
            grad_energy,
            leverage,
            lambda: projected.lambda,
            ellipsoid_distance_sq: ellipsoid.distance_sq(&projected.a),
            inverse_drift,
        });
        state.a = projected.a;
        state.iteration += 1;
    }

    Ok(SonSgRun {
        a_hat: state.a,
        diagnostics,
        sigma_final: state.sigma,
    })
}

/// Outcome of the deterministic run checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantVerdicts {
    /// Every iterate satisfies `||A - A_0||_{S_0} <= 1 + tol`.
    pub iterates_in_ellipsoid: bool,
    pub inverse_consistent: bool,
    pub time_ordered: bool,
    pub potential: bool,
    pub potential_margin: Option<f64>,
    /// Present only with ground truth inside the ellipsoid.
    pub generic_bound_slack: Option<f64>,
    pub generic_bound_tolerance: Option<f64>,
    pub generic_bound: Option<bool>,
    pub truth_in_ellipsoid: Option<bool>,
}

impl InvariantVerdicts {
    pub fn all_pass(&self) -> bool {
        self.iterates_in_ellipsoid
            && self.inverse_consistent
            && self.time_ordered
            && self.potential
            && self.generic_bound.unwrap_or(true)
    }
}

pub fn evaluate_invariants(
    run: &SonSgRun,
    ellipsoid: &ConfidenceEllipsoid,
    tol: f64,
    ground_truth: Option<&DMatrix<f64>>,
) -> InvariantVerdicts {
    let diag = &run.diagnostics;
    let omega = ellipsoid.omega();
    let margin = potential_margin(diag, &run.sigma_final, omega);
    let mut v = InvariantVerdicts {
        iterates_in_ellipsoid: diag.max_ellipsoid_distance_sq().sqrt() <= 1.0 + tol,
        inverse_consistent: diag.max_inverse_drift() <= INVERSE_DRIFT_LIMIT,
        time_ordered: diag.is_time_ordered(),
        potential: margin.is_some_and(|m| m >= -1e-8),
        potential_margin: margin,
        generic_bound_slack: None,
        generic_bound_tolerance: None,
        generic_bound: None,
        truth_in_ellipsoid: None,
    };
    if let Some(a_star) = ground_truth {
        v.truth_in_ellipsoid = Some(ellipsoid.contains(a_star));
        if let Ok(slack) = check_generic_bound(diag, &run.a_hat, a_star, ellipsoid, &run.sigma_final)
        {
            let tolerance = generic_bound_tolerance(diag);
            v.generic_bound_slack = Some(slack);
            v.generic_bound_tolerance = Some(tolerance);
            v.generic_bound = Some(slack >= -tolerance);
        }
    }
    v
}

/// Everything a learning run reports besides the estimate itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnReport {
    pub config: SonSgConfig,
    pub eta: f64,
    pub gamma: f64,
    pub test_draws: usize,
    pub max_attempts: u64,
    pub total_pairs: usize,
    pub warmup_pairs: usize,
    pub estimation_pairs: usize,
    pub warmup_condition: f64,
    pub ellipsoid: ConfidenceEllipsoid,
    pub branch_counts: BranchCounts,
    pub e1: Option<f64>,
    pub e2: f64,
    pub invariants: InvariantVerdicts,
    #[serde(skip)]
    pub run: Option<SonSgRun>,
}

/// Minimum pair count for a learning run of dimension `d`.
pub fn required_pairs(d: usize) -> usize {
    (2 * d).max(2)
}

/// Full pipeline on a censored view: pairs, split, warmup, one pass of
/// the online estimator.
pub fn learn_censored_lds(
    view: &CensoredView,
    cfg: &SonSgConfig,
    seed: u64,
    ground_truth: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, LearnReport)> {
    cfg.validate()?;
    let pairs = extract_pairs(view);
    let required = required_pairs(view.dim);
    if pairs.len() < required {
        return Err(Error::InsufficientPairs {
            found: pairs.len(),
            required,
        });
    }
    let (warm, rest) = split_pairs(&pairs)?;
    let warmup_condition = covariate_condition(&warm);
    let ellipsoid = warmup(&warm, cfg)?;
    let test = cfg.test_config(view.horizon)?;
    let mut rng = NormalStream::new(seed);
    let run = son_sg(&ellipsoid, &rest.pairs, cfg, &test, &mut rng, ground_truth)?;
    let invariants = evaluate_invariants(&run, &ellipsoid, 1e-6, ground_truth);
    let report = LearnReport {
        config: cfg.clone(),
        eta: cfg.eta(),
        gamma: cfg.gamma(),
        test_draws: test.draws(),
        max_attempts: cfg.max_attempts_for(&test),
        total_pairs: pairs.len(),
        warmup_pairs: warm.len(),
        estimation_pairs: rest.len(),
        warmup_condition,
        ellipsoid,
        branch_counts: run.diagnostics.branch_counts(),
        e1: run.diagnostics.e1(),
        e2: run.diagnostics.e2(),
        invariants,
        run: None,
    };
    let a_hat = run.a_hat.clone();
    Ok((
        a_hat,
        LearnReport {
            run: Some(run),
            ..report
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::make_static_schedule;
    use crate::simulator::{simulate, SystemSpec};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn pair(t: usize, x: f64, y: f64, set: ObservableSet) -> Pair {
        Pair {
            t,
            x: vec1(x),
            y: vec1(y),
            set,
        }
    }

    #[test]
    fn config_derived_values() {
        let cfg = SonSgConfig {
            alpha: 0.5,
            c_s: 2.0,
            ..Default::default()
        };
        assert!((cfg.warmup_scale() - 2.0 * (2f64.ln().sqrt() + 1.0)).abs() < 1e-15);
        assert!((cfg.warmup_scale() - 3.665).abs() < 1e-3);
        assert_eq!(cfg.eta(), 4.0);
        assert_eq!(cfg.gamma(), 1.0 / 16.0);
        assert!(SonSgConfig {
            c_gamma: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn warmup_scalar_example() {
        let full = ObservableSet::full_space(1).unwrap();
        let data = PairedDataset {
            pairs: vec![pair(1, 1.0, 0.5, full.clone()), pair(2, 2.0, 1.0, full)],
        };
        let cfg = SonSgConfig::default();
        let k = warmup(&data, &cfg).unwrap();
        assert!((k.center[(0, 0)] - 0.5).abs() < 1e-15);
        let s = cfg.warmup_scale();
        assert!((k.shape[(0, 0)] - 5.0 / (2.0 * s)).abs() < 1e-15);
    }

    #[test]
    fn warmup_exact_on_noiseless_data() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 0.9, 0.1]);
        let full = ObservableSet::full_space(2).unwrap();
        let xs = [[1.0, 0.5], [-0.2, 1.0], [0.7, 0.7], [2.0, -1.0]];
        let data = PairedDataset {
            pairs: xs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let x = DVector::from_row_slice(x);
                    Pair {
                        t: i + 1,
                        y: &a * &x,
                        x,
                        set: full.clone(),
                    }
                })
                .collect(),
        };
        let k = warmup(&data, &SonSgConfig::default()).unwrap();
        assert!((k.center - a).abs().max() < 1e-12);
    }

    #[test]
    fn warmup_rejects_rank_deficient_covariates() {
        let full = ObservableSet::full_space(2).unwrap();
        let data = PairedDataset {
            pairs: (1..5)
                .map(|t| Pair {
                    t,
                    x: DVector::from_vec(vec![t as f64, 2.0 * t as f64]),
                    y: DVector::from_vec(vec![0.0, 0.0]),
                    set: full.clone(),
                })
                .collect(),
        };
        assert!(matches!(
            warmup(&data, &SonSgConfig::default()),
            Err(Error::InsufficientExcitation { .. })
        ));
    }

    #[test]
    fn empty_set_gives_oblivious_gradient() {
        let test = TestConfig::new(0.5, 2, 100).unwrap();
        let mut rng = NormalStream::new(0);
        let empty = ObservableSet::empty(2).unwrap();
        let mu = DVector::from_vec(vec![1.0, 2.0]);
        let x = DVector::from_vec(vec![0.5, -1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        let out = test_and_switch_grad(&mu, &x, &y, &empty, &test, 10, &mut rng).unwrap();
        assert_eq!(out.branch, Branch::CensorOblivious);
        assert_eq!(out.g, (&mu - &y) * x.transpose());
        let out = test_and_switch_grad(&mu, &x, &mu, &empty, &test, 10, &mut rng).unwrap();
        assert_eq!(out.g, DMatrix::zeros(2, 2));
    }

    #[test]
    fn full_space_gradient_is_unbiased() {
        let test = TestConfig::new(0.5, 1, 10).unwrap();
        let mut rng = NormalStream::new(11);
        let full = ObservableSet::full_space(2).unwrap();
        let mu = DVector::from_vec(vec![0.3, -0.6]);
        let x = DVector::from_vec(vec![1.5, 0.5]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let n = 10_000;
        let mut sum = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let out = test_and_switch_grad(&mu, &x, &y, &full, &test, 5, &mut rng).unwrap();
            assert_eq!(out.branch, Branch::CensorAware);
            sum += out.g;
        }
        let mean = sum / n as f64;
        let expected = (&mu - &y) * x.transpose();
        // Entry (i, j) has standard deviation |x_j|.
        for i in 0..2 {
            for j in 0..2 {
                let ci = 4.0 * x[j].abs() / (n as f64).sqrt();
                assert!((mean[(i, j)] - expected[(i, j)]).abs() < ci);
            }
        }
    }

    #[test]
    fn zero_gradients_leave_center_unchanged() {
        let k = ConfidenceEllipsoid::new(scalar(0.4), scalar(0.5)).unwrap();
        let empty = ObservableSet::empty(1).unwrap();
        // With the empty set the Test fails, z = mu = A_i x, and y = A_0 x.
        let data: Vec<Pair> = (1..20)
            .map(|t| pair(t, t as f64 * 0.1, 0.4 * t as f64 * 0.1, empty.clone()))
            .collect();
        let cfg = SonSgConfig::default();
        let test = cfg.test_config(100).unwrap();
        let mut rng = NormalStream::new(1);
        let run = son_sg(&k, &data, &cfg, &test, &mut rng, None).unwrap();
        assert_eq!(run.a_hat, scalar(0.4));
        assert_eq!(run.diagnostics.e2(), 0.0);
    }

    #[test]
    fn maintained_inverse_stays_consistent() {
        let k = ConfidenceEllipsoid::new(DMatrix::zeros(3, 3), DMatrix::identity(3, 3) * 0.1).unwrap();
        let mut state = EstimatorState::new(&k).unwrap();
        let mut rng = NormalStream::new(5);
        let mut prev = state.sigma.clone();
        for _ in 0..500 {
            let x = DVector::from_fn(3, |_, _| 3.0 * rng.normal());
            let drift = state.add_covariate(&x).unwrap();
            assert!(drift <= INVERSE_DRIFT_LIMIT);
            let (min, _) = sym_eigen_extremes(&(&state.sigma - &prev));
            assert!(min >= -1e-9);
            prev = state.sigma.clone();
        }
    }

    #[test]
    fn rejects_out_of_order_pairs() {
        let k = ConfidenceEllipsoid::new(scalar(0.0), scalar(1.0)).unwrap();
        let full = ObservableSet::full_space(1).unwrap();
        let data = vec![pair(3, 1.0, 0.0, full.clone()), pair(2, 1.0, 0.0, full)];
        let cfg = SonSgConfig::default();
        let test = cfg.test_config(10).unwrap();
        let mut rng = NormalStream::new(1);
        assert!(son_sg(&k, &data, &cfg, &test, &mut rng, None).is_err());
    }

    #[test]
    fn learn_with_two_pairs_runs_one_step() {
        let view = CensoredView {
            horizon: 2,
            dim: 1,
            observations: vec![Some(vec1(1.0)), Some(vec1(0.6)), Some(vec1(0.2))],
            sets: vec![ObservableSet::full_space(1).unwrap(); 3],
        };
        let (_, report) = learn_censored_lds(&view, &SonSgConfig::default(), 0, None).unwrap();
        assert_eq!(report.warmup_pairs, 1);
        assert_eq!(report.estimation_pairs, 1);
        assert_eq!(report.run.as_ref().unwrap().diagnostics.len(), 1);
    }

    #[test]
    fn learn_reports_insufficient_pairs() {
        let view = CensoredView {
            horizon: 3,
            dim: 2,
            observations: vec![None, Some(DVector::zeros(2)), Some(DVector::zeros(2)), None],
            sets: vec![ObservableSet::full_space(2).unwrap(); 4],
        };
        assert!(matches!(
            learn_censored_lds(&view, &SonSgConfig::default(), 0, None),
            Err(Error::InsufficientPairs { found: 1, required: 4 })
        ));
    }

    #[test]
    fn uncensored_run_checks_pass() {
        let a_star = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]);
        let spec = SystemSpec::new(a_star.clone()).unwrap();
        let sched = make_static_schedule(ObservableSet::full_space(2).unwrap());
        let traj = simulate(&spec, &sched, 3000, 21).unwrap();
        let cfg = SonSgConfig {
            alpha: 0.9,
            ..Default::default()
        };
        let (a_hat, report) =
            learn_censored_lds(&traj.censored_view(), &cfg, 3, Some(&a_star)).unwrap();
        assert!(report.invariants.all_pass(), "{:?}", report.invariants);
        assert_eq!(report.invariants.generic_bound, Some(true));
        assert!((a_hat - a_star).norm() < 0.15);
    }
}
