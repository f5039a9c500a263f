//! Fixed-seed property battery behind the `verify` subcommand.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use crate::estimator::{kkt_residual, learn_censored_lds, project_ellipsoid, ConfidenceEllipsoid, SonSgConfig};
use crate::harness::config::SystemConfig;
use crate::rng::NormalStream;
use crate::sets::{make_chasing_schedule, make_static_schedule, HalfSpace, ObservableSet, SetSchedule};
use crate::simulator::{measure_constants, simulate, SystemSpec};
use crate::truncated::{
    mc_truncated_moments, rejection_sample, std_normal_cdf, survival_fraction, survival_lower_bound,
    truncnorm_1d_exact, truncnorm_1d_union_exact, SampleOutcome,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteVerdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SuiteVerdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

type Suite = fn() -> SuiteVerdict;

const SUITES: [Suite; 8] = [
    suite_generic_bound,
    suite_potential,
    suite_sampler_ks,
    suite_truncated_mean,
    suite_survival_bound,
    suite_variance_growth,
    suite_small_survival_set,
    suite_projection,
];

/// Runs every suite, `parallelism` at a time (all cores when `None`).
pub fn run_verify(parallelism: Option<usize>) -> Result<Vec<SuiteVerdict>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.unwrap_or(0))
        .build()
        .map_err(|e| crate::Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| SUITES.par_iter().map(|s| s()).collect()))
}

fn unit_vector(d: usize, rng: &mut NormalStream) -> Vec<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.normal());
        let n = v.norm();
        if n > 1e-3 {
            return (v / n).iter().cloned().collect();
        }
    }
}

fn uniform(rng: &mut NormalStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// A random censoring schedule of dimension `d` that keeps a fair share of
/// the states observable.
pub fn random_schedule(d: usize, rng: &mut NormalStream) -> Result<SetSchedule> {
    let kind = (rng.next_u64() % 6) as usize;
    Ok(match kind {
        0 => make_static_schedule(ObservableSet::full_space(d)?),
        1 => make_static_schedule(ObservableSet::half_space(
            unit_vector(d, rng),
            uniform(rng, -1.0, 0.3),
        )?),
        2 => {
            let lower = (0..d).map(|_| uniform(rng, -2.5, -0.5)).collect();
            let upper = (0..d).map(|_| uniform(rng, 0.5, 2.5)).collect();
            make_static_schedule(ObservableSet::axis_box(lower, upper)?)
        }
        3 => make_chasing_schedule((0..d).map(|_| uniform(rng, -2.0, -0.5)).collect())?,
        4 => {
            let members = (0..2)
                .map(|_| HalfSpace::new(unit_vector(d, rng), uniform(rng, 0.0, 1.0)))
                .collect::<Result<Vec<_>>>()?;
            make_static_schedule(ObservableSet::union_of_half_spaces(members)?)
        }
        _ => make_static_schedule(ObservableSet::two_slab(d, 0, uniform(rng, 0.2, 1.0))?),
    })
}

struct BoundRun {
    slack_ok: bool,
    potential_ok: bool,
}

/// `count` runs with ground truth inside the warmup ellipsoid. Runs whose
/// truth falls outside are replaced by the next seed.
fn bound_runs(count: usize) -> Result<(Vec<BoundRun>, usize)> {
    let mut out = Vec::with_capacity(count);
    let mut skipped = 0;
    let mut seed = 0u64;
    while out.len() < count {
        seed += 1;
        if skipped > 4 * count {
            break;
        }
        let mut rng = NormalStream::with_stream(seed, 77);
        let d = 1 + (rng.next_u64() % 3) as usize;
        let a_star = SystemConfig::RandomDiagonalizable {
            dim: d,
            rho: uniform(&mut rng, 0.2, 0.9),
            seed,
        }
        .matrix()?;
        let spec = SystemSpec::new(a_star.clone())?;
        let schedule = random_schedule(d, &mut rng)?;
        let horizon = 150 + (rng.next_u64() % 250) as usize;
        let cfg = SonSgConfig {
            alpha: uniform(&mut rng, 0.2, 0.6),
            ..Default::default()
        };
        let traj = simulate(&spec, &schedule, horizon, seed)?;
        let Ok((_, report)) = learn_censored_lds(&traj.censored_view(), &cfg, seed, Some(&a_star))
        else {
            skipped += 1;
            continue;
        };
        let inv = &report.invariants;
        if inv.truth_in_ellipsoid != Some(true) {
            skipped += 1;
            continue;
        }
        out.push(BoundRun {
            slack_ok: inv.generic_bound == Some(true),
            potential_ok: inv.potential,
        });
    }
    Ok((out, skipped))
}

fn suite_generic_bound() -> SuiteVerdict {
    SuiteVerdict::from_result(
        "generic_regret_bound",
        bound_runs(100).map(|(runs, skipped)| {
            let bad = runs.iter().filter(|r| !r.slack_ok).count();
            (
                runs.len() == 100 && bad == 0,
                format!("{} runs, {bad} violations, {skipped} replaced", runs.len()),
            )
        }),
    )
}

fn suite_potential() -> SuiteVerdict {
    SuiteVerdict::from_result(
        "potential_inequality",
        bound_runs(100).map(|(runs, _)| {
            let bad = runs.iter().filter(|r| !r.potential_ok).count();
            (runs.len() == 100 && bad == 0, format!("{} runs, {bad} violations", runs.len()))
        }),
    )
}

/// Kolmogorov-Smirnov distance between samples and a continuous CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn suite_sampler_ks() -> SuiteVerdict {
    let run = || -> Result<(bool, String)> {
        let mut rng = NormalStream::new(606);
        let mut worst = 0.0f64;
        let mut cases = 0;
        while cases < 10 {
            let mu = uniform(&mut rng, -2.0, 2.0);
            let a = mu + uniform(&mut rng, -2.5, 1.0);
            let b = if rng.uniform() < 0.3 {
                f64::INFINITY
            } else {
                a + uniform(&mut rng, 0.3, 3.0)
            };
            let exact = truncnorm_1d_exact(mu, a, b)?;
            if exact.mass < 0.05 {
                continue;
            }
            cases += 1;
            let set = ObservableSet::axis_box(vec![a], vec![b])?;
            let mut xs = Vec::with_capacity(10_000);
            while xs.len() < 10_000 {
                if let SampleOutcome::Accepted { value, .. } = rejection_sample(&[mu], &set, &mut rng, 10_000)? {
                    xs.push(value[0]);
                }
            }
            let lo = std_normal_cdf(a - mu);
            let ks = ks_statistic(&mut xs, |x| ((std_normal_cdf(x - mu) - lo) / exact.mass).clamp(0.0, 1.0));
            worst = worst.max(ks);
        }
        Ok((worst < 0.02, format!("max KS statistic {worst:.5} over {cases} cases (limit 0.02)")))
    };
    SuiteVerdict::from_result("sampler_ks", run())
}

fn suite_truncated_mean() -> SuiteVerdict {
    let run = || -> Result<(bool, String)> {
        let gamma: f64 = 0.05;
        let bound = (2.0 * (1.0 / gamma).ln()).sqrt() + 1.0;
        let normal = Normal::standard();
        let mut rng = NormalStream::new(707);
        let mut worst = f64::NEG_INFINITY;
        let mut bad = 0;
        for _ in 0..200 {
            let d = 1 + (rng.next_u64() % 4) as usize;
            let mu: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
            let n = unit_vector(d, &mut rng);
            let mass = uniform(&mut rng, gamma, 1.0);
            let proj: f64 = n.iter().zip(&mu).map(|(a, b)| a * b).sum();
            let set = ObservableSet::half_space(n, proj - normal.inverse_cdf(mass))?;
            let m = mc_truncated_moments(&mu, &set, 4000, &mut rng)?;
            let dist = (&m.mean - DVector::from_column_slice(&mu)).norm();
            let margin = dist - bound - m.ci_halfwidth.norm();
            worst = worst.max(margin);
            if margin > 0.0 {
                bad += 1;
            }
        }
        Ok((bad == 0, format!("200 cases, {bad} violations, worst margin {worst:.4}")))
    };
    SuiteVerdict::from_result("truncated_mean_bound", run())
}

fn suite_survival_bound() -> SuiteVerdict {
    let run = || -> Result<(bool, String)> {
        let normal = Normal::standard();
        let mut rng = NormalStream::new(808);
        let draws = 20_000;
        let mut bad = 0;
        for _ in 0..200 {
            let d = 1 + (rng.next_u64() % 4) as usize;
            let alpha = uniform(&mut rng, 0.05, 0.6);
            let mu_star: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
            let n = unit_vector(d, &mut rng);
            let mass_star = uniform(&mut rng, alpha, 1.0);
            let proj: f64 = n.iter().zip(&mu_star).map(|(a, b)| a * b).sum();
            let set = ObservableSet::half_space(n, proj - normal.inverse_cdf(mass_star))?;
            let r = uniform(&mut rng, 0.0, 2.5);
            let dir = unit_vector(d, &mut rng);
            let mu: Vec<f64> = mu_star.iter().zip(&dir).map(|(m, u)| m + r * u).collect();
            let p = survival_fraction(&mu, &set, draws, &mut rng)?;
            let ci = 3.0 * (p * (1.0 - p) / draws as f64).sqrt() + 1.0 / draws as f64;
            if p < survival_lower_bound(alpha, r) - ci {
                bad += 1;
            }
        }
        Ok((bad == 0, format!("200 cases, {bad} violations")))
    };
    SuiteVerdict::from_result("survival_lower_bound", run())
}

/// Variance along the gap axis of N(mu, 1) on `x <= 0 or x >= sqrt(d)`
/// with `mu` at the midpoint, and the mass of that set.
pub fn two_slab_midpoint_moments(d: usize) -> Result<(f64, f64)> {
    let gap = (d as f64).sqrt();
    let m = truncnorm_1d_union_exact(0.5 * gap, &[(f64::NEG_INFINITY, 0.0), (gap, f64::INFINITY)])?;
    Ok((m.variance, m.mass))
}

fn suite_variance_growth() -> SuiteVerdict {
    let run = || -> Result<(bool, String)> {
        let (v4, _) = two_slab_midpoint_moments(4)?;
        let (v64, mass64) = two_slab_midpoint_moments(64)?;
        let ratio = v64 / v4;
        Ok((
            ratio >= 8.0 && mass64 < 1e-4,
            format!(
                "var(d=4) = {v4:.4}, var(d=64) = {v64:.4}, ratio {ratio:.4} (need >= 8), mass(d=64) = {mass64:.3e} (need < 1e-4)"
            ),
        ))
    };
    SuiteVerdict::from_result("two_slab_variance_growth", run())
}

fn suite_small_survival_set() -> SuiteVerdict {
    let run = || -> Result<(bool, String)> {
        let normal = Normal::standard();
        let horizon = 10_000;
        let mut worst = 0.0f64;
        let mut detail = Vec::new();
        for a in [0.3f64, 0.9] {
            let sigma_inf = 1.0 / (1.0 - a * a).sqrt();
            let lambda = sigma_inf * normal.inverse_cdf(0.9);
            let spec = SystemSpec::new(DMatrix::from_element(1, 1, a))?;
            let sched = make_static_schedule(ObservableSet::half_space(vec![1.0], lambda)?);
            for seed in 0..5u64 {
                let traj = simulate(&spec, &sched, horizon, 900 + seed)?;
                let c = measure_constants(&traj, &spec, &[0.01], 2000, seed)?;
                let frac = c.b_counts[0].1 as f64 / horizon as f64;
                worst = worst.max(frac);
                if seed == 0 {
                    detail.push(format!("a={a}: beta_hat {:.3}", c.beta_hat));
                }
            }
        }
        Ok((
            worst < 0.01,
            format!("max |B(0.01)|/T = {worst:.5} (limit 0.01); {}", detail.join(", ")),
        ))
    };
    SuiteVerdict::from_result("small_survival_set", run())
}

fn suite_projection() -> SuiteVerdict {
    let run = || -> Result<(bool, String)> {
        let mut rng = NormalStream::new(1212);
        let mut worst_kkt = 0.0f64;
        let mut worst_excess = 0.0f64;
        for _ in 0..50 {
            let spd = |rng: &mut NormalStream, scale: f64| {
                let g = DMatrix::from_fn(2, 2, |_, _| rng.normal());
                (&g * g.transpose() + DMatrix::identity(2, 2) * 0.1) * scale
            };
            let center = DMatrix::from_fn(2, 2, |_, _| rng.normal());
            let shape = spd(&mut rng, 1.0);
            let sigma = spd(&mut rng, 10.0);
            let a_tilde = &center + DMatrix::from_fn(2, 2, |_, _| 3.0 * rng.normal());
            let k = ConfidenceEllipsoid::new(center, shape)?;
            let p = project_ellipsoid(&a_tilde, &sigma, &k, 1e-10)?;
            worst_kkt = worst_kkt.max(kkt_residual(&p, &a_tilde, &sigma, &k));
            worst_excess = worst_excess.max(k.distance_sq(&p.a).sqrt() - 1.0);
        }
        Ok((
            worst_kkt < 1e-6 && worst_excess <= 1e-9,
            format!("50 cases, max KKT residual {worst_kkt:.3e}, max constraint excess {worst_excess:.3e}"),
        ))
    };
    SuiteVerdict::from_result("projection_kkt", run())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&mut xs, |x| x) <= 0.0005 + 1e-12);
    }

    #[test]
    fn two_slab_moments_match_hand_values() {
        // d = 4: mu = 1, set (-inf, 0] u [2, inf) is symmetric about mu.
        let (v, m) = two_slab_midpoint_moments(4).unwrap();
        let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tail = std_normal_cdf(-1.0);
        assert!((m - 2.0 * tail).abs() < 1e-15);
        assert!((v - (1.0 + phi1 / tail)).abs() < 1e-12);
    }

    #[test]
    fn random_schedules_are_valid() {
        let mut rng = NormalStream::new(3);
        for d in 1..=3 {
            for _ in 0..20 {
                let s = random_schedule(d, &mut rng).unwrap();
                assert_eq!(s.dim(), d);
            }
        }
    }
}
