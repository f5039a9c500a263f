//! Truncated Gaussians with identity covariance.
//!
//! Sampling uses only the membership oracle of the set. The exact 1-d
//! formulas are the usual Mills-ratio expressions and serve as oracles for
//! the samplers.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_dim, Error, Result};
use crate::rng::NormalStream;
use crate::sets::ObservableSet;

/// Upper limit on the number of Test draws per call.
pub const MAX_TEST_DRAWS: usize = 1_000_000;

/// Parameters of the survival Test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub c_gamma: u32,
    pub horizon: usize,
}

impl TestConfig {
    pub fn new(alpha: f64, c_gamma: u32, horizon: usize) -> Result<Self> {
        let cfg = TestConfig {
            alpha,
            c_gamma,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        let gamma = self.gamma();
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "gamma = (alpha/2)^c_gamma = {gamma} must lie in (0, 1/2); use c_gamma >= 1"
            )));
        }
        Ok(())
    }

    /// `(alpha / 2)^c_gamma`.
    pub fn gamma(&self) -> f64 {
        (self.alpha / 2.0).powi(self.c_gamma as i32)
    }

    /// `ceil((4 / gamma) ln T)`, at least 1 and at most [`MAX_TEST_DRAWS`].
    pub fn draws(&self) -> usize {
        let raw = (4.0 / self.gamma() * (self.horizon as f64).ln()).ceil();
        if raw > MAX_TEST_DRAWS as f64 {
            warn!(
                "Test draw count {raw:e} capped at {MAX_TEST_DRAWS}; the survival Test is less reliable than its nominal guarantee"
            );
            MAX_TEST_DRAWS
        } else {
            (raw as usize).max(1)
        }
    }

    /// Default rejection budget `ceil((10 / gamma) ln T)`, at least 1.
    pub fn default_max_attempts(&self) -> u64 {
        ((10.0 / self.gamma() * (self.horizon as f64).ln()).ceil() as u64).max(1)
    }
}

/// Fraction of `draws` samples from N(mu, I) landing in `set`.
pub fn survival_fraction(
    mu: &[f64],
    set: &ObservableSet,
    draws: usize,
    rng: &mut NormalStream,
) -> Result<f64> {
    check_dim(set.dim(), mu.len())?;
    let mut z = vec![0.0; mu.len()];
    let mut hits = 0usize;
    for _ in 0..draws {
        rng.fill_gaussian(mu, &mut z);
        if set.contains_unchecked(&z) {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

/// The survival Test: `k` draws from N(mu, I), pass iff the hit fraction
/// is at least `2 gamma`. Consumes exactly `k * n` normal variates.
pub fn test_survival(
    mu: &[f64],
    set: &ObservableSet,
    cfg: &TestConfig,
    rng: &mut NormalStream,
) -> Result<bool> {
    let p = survival_fraction(mu, set, cfg.draws(), rng)?;
    Ok(p >= 2.0 * cfg.gamma())
}

#[derive(Clone, Debug, PartialEq)]
pub enum SampleOutcome {
    Accepted { value: Vec<f64>, attempts: u64 },
    Exhausted { attempts: u64 },
}

impl SampleOutcome {
    pub fn attempts(&self) -> u64 {
        match self {
            SampleOutcome::Accepted { attempts, .. } | SampleOutcome::Exhausted { attempts } => {
                *attempts
            }
        }
    }

    pub fn value(&self) -> Option<&[f64]> {
        match self {
            SampleOutcome::Accepted { value, .. } => Some(value),
            SampleOutcome::Exhausted { .. } => None,
        }
    }
}

/// Draws from N(mu, I) until a point lands in `set` or the budget runs out.
pub fn rejection_sample(
    mu: &[f64],
    set: &ObservableSet,
    rng: &mut NormalStream,
    max_attempts: u64,
) -> Result<SampleOutcome> {
    check_dim(set.dim(), mu.len())?;
    if max_attempts == 0 {
        return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
    }
    let mut z = vec![0.0; mu.len()];
    for attempt in 1..=max_attempts {
        rng.fill_gaussian(mu, &mut z);
        if set.contains_unchecked(&z) {
            return Ok(SampleOutcome::Accepted {
                value: z,
                attempts: attempt,
            });
        }
    }
    Ok(SampleOutcome::Exhausted {
        attempts: max_attempts,
    })
}

/// Monte-Carlo moments of N(mu, I, S).
#[derive(Clone, Debug)]
pub struct TruncatedMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// accepted / attempted, an estimate of N(mu, I; S).
    pub acceptance_rate: f64,
    /// 3 * per-coordinate std / sqrt(accepted).
    pub ci_halfwidth: DVector<f64>,
    pub accepted: usize,
    pub attempted: usize,
}

/// Draws until `n_samples` points are accepted, giving up after
/// `100 * n_samples` attempts. Fewer than 100 acceptances is an error.
pub fn mc_truncated_moments(
    mu: &[f64],
    set: &ObservableSet,
    n_samples: usize,
    rng: &mut NormalStream,
) -> Result<TruncatedMoments> {
    check_dim(set.dim(), mu.len())?;
    if n_samples < 100 {
        return Err(Error::InvalidConfig(format!("n_samples must be >= 100, got {n_samples}")));
    }
    let n = mu.len();
    let max_attempts = 100 * n_samples;
    let mut z = vec![0.0; n];
    let mut sum = DVector::<f64>::zeros(n);
    let mut outer = DMatrix::<f64>::zeros(n, n);
    let (mut accepted, mut attempted) = (0usize, 0usize);
    // Accumulate around mu to limit cancellation in the covariance.
    while accepted < n_samples && attempted < max_attempts {
        attempted += 1;
        rng.fill_gaussian(mu, &mut z);
        if set.contains_unchecked(&z) {
            accepted += 1;
            let c = DVector::from_iterator(n, z.iter().zip(mu).map(|(a, m)| a - m));
            sum += &c;
            outer.ger(1.0, &c, &c, 1.0);
        }
    }
    if accepted < 100 {
        return Err(Error::MassTooSmall {
            accepted,
            attempts: attempted,
        });
    }
    let m = accepted as f64;
    let centered_mean = &sum / m;
    let mut covariance = outer / m - &centered_mean * centered_mean.transpose();
    if accepted > 1 {
        covariance *= m / (m - 1.0);
    }
    let ci_halfwidth = DVector::from_iterator(
        n,
        (0..n).map(|i| 3.0 * covariance[(i, i)].max(0.0).sqrt() / m.sqrt()),
    );
    Ok(TruncatedMoments {
        mean: centered_mean + DVector::from_column_slice(mu),
        covariance,
        acceptance_rate: m / attempted as f64,
        ci_halfwidth,
        accepted,
        attempted,
    })
}

pub fn std_normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate far into the tail.
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncnorm1d {
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Exact mass, mean and variance of N(mu, 1) restricted to `[a, b]`.
pub fn truncnorm_1d_exact(mu: f64, a: f64, b: f64) -> Result<Truncnorm1d> {
    if a.is_nan() || b.is_nan() || mu.is_nan() || a >= b {
        return Err(Error::InvalidConfig(format!("need a < b, got [{a}, {b}]")));
    }
    let (lo, hi) = (a - mu, b - mu);
    // Difference of whichever tails are small, to keep precision.
    let mass = if lo > 0.0 {
        std_normal_sf(lo) - std_normal_sf(hi)
    } else if hi < 0.0 {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    } else {
        1.0 - std_normal_cdf(lo) - std_normal_sf(hi)
    };
    if !(mass >= 1e-300) {
        return Err(Error::EmptyInterval {
            mean: mu,
            lower: a,
            upper: b,
        });
    }
    let (pdf_lo, pdf_hi) = (std_normal_pdf(lo), std_normal_pdf(hi));
    let x_pdf = |x: f64, p: f64| if x.is_infinite() { 0.0 } else { x * p };
    let shift = (pdf_lo - pdf_hi) / mass;
    let variance = 1.0 + (x_pdf(lo, pdf_lo) - x_pdf(hi, pdf_hi)) / mass - shift * shift;
    Ok(Truncnorm1d {
        mass,
        mean: mu + shift,
        variance,
    })
}

/// Exact moments of N(mu, 1) restricted to a union of disjoint intervals.
pub fn truncnorm_1d_union_exact(mu: f64, intervals: &[(f64, f64)]) -> Result<Truncnorm1d> {
    let pieces = intervals
        .iter()
        .map(|&(a, b)| truncnorm_1d_exact(mu, a, b))
        .collect::<Result<Vec<_>>>()?;
    let mass: f64 = pieces.iter().map(|p| p.mass).sum();
    let mean = pieces.iter().map(|p| p.mass * p.mean).sum::<f64>() / mass;
    // Law of total variance over the pieces.
    let variance = pieces
        .iter()
        .map(|p| p.mass * (p.variance + (p.mean - mean).powi(2)))
        .sum::<f64>()
        / mass;
    Ok(Truncnorm1d {
        mass,
        mean,
        variance,
    })
}

/// Lower bound on N(mu, I; S) when N(mu*, I; S) >= alpha and
/// ||mu - mu*|| <= r: `(alpha/2) exp(-r^2/2 - r sqrt(2 ln(1/alpha)))`.
pub fn survival_lower_bound(alpha: f64, r: f64) -> f64 {
    0.5 * alpha * (-0.5 * r * r - r * (2.0 * (1.0 / alpha).ln()).sqrt()).exp()
}
