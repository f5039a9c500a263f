//! Censored linear-system simulation, pair extraction and the quantities
//! used to evaluate estimates (controllability Gramian, spectral data,
//! empirical censoring constants).

use log::warn;
use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{check_dim, Error, Result};
use crate::linalg::weighted_norm_sq;
use crate::rng::NormalStream;
use crate::sets::{ObservableSet, SetSchedule};
use crate::truncated::survival_fraction;

/// `x_{t+1} = A x_t + w_t`, `w_t ~ N(0, I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub a_star: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl SystemSpec {
    pub fn new(a_star: DMatrix<f64>) -> Result<Self> {
        let d = a_star.nrows();
        Self::with_initial_state(a_star, DVector::zeros(d))
    }

    pub fn with_initial_state(a_star: DMatrix<f64>, x0: DVector<f64>) -> Result<Self> {
        if a_star.nrows() == 0 || !a_star.is_square() {
            return Err(Error::InvalidConfig(format!(
                "system matrix must be square and nonempty, got {}x{}",
                a_star.nrows(),
                a_star.ncols()
            )));
        }
        check_dim(a_star.nrows(), x0.len())?;
        if a_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("system matrix has non-finite entries".into()));
        }
        match spectral_radius(&a_star) {
            Ok(rho) if rho >= 1.0 => warn!("system matrix is not stable (spectral radius {rho})"),
            Err(e) => warn!("could not check stability: {e}"),
            _ => {}
        }
        Ok(SystemSpec { a_star, x0 })
    }

    pub fn dim(&self) -> usize {
        self.a_star.nrows()
    }
}

/// One simulated run. Index `k` of each vector holds step `t = k + 1`;
/// there are `horizon + 1` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct CensoredTrajectory {
    pub horizon: usize,
    pub states: Vec<DVector<f64>>,
    pub observed: Vec<bool>,
    pub sets: Vec<ObservableSet>,
    pub seed: u64,
}

impl CensoredTrajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// What the learner sees: states only where observed, plus every set.
    pub fn censored_view(&self) -> CensoredView {
        CensoredView {
            horizon: self.horizon,
            dim: self.dim(),
            observations: self
                .states
                .iter()
                .zip(&self.observed)
                .map(|(x, &o)| o.then(|| x.clone()))
                .collect(),
            sets: self.sets.clone(),
        }
    }

    /// `|O| / T` over steps `1..=T`.
    pub fn beta_hat(&self) -> f64 {
        self.observed[..self.horizon].iter().filter(|o| **o).count() as f64 / self.horizon as f64
    }
}

/// The censored observation process: `observations[k]` is `Some(x_{k+1})`
/// iff `x_{k+1}` fell in `sets[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CensoredView {
    pub horizon: usize,
    pub dim: usize,
    pub observations: Vec<Option<DVector<f64>>>,
    pub sets: Vec<ObservableSet>,
}

/// Runs the system for `horizon` transitions, producing `x_1 ... x_{T+1}`.
pub fn simulate(
    spec: &SystemSpec,
    schedule: &SetSchedule,
    horizon: usize,
    seed: u64,
) -> Result<CensoredTrajectory> {
    if horizon < 2 {
        return Err(Error::InvalidConfig(format!("horizon must be >= 2, got {horizon}")));
    }
    let d = spec.dim();
    check_dim(d, schedule.dim())?;
    let mut rng = NormalStream::new(seed);
    let mut noise = vec![0.0; d];
    let mut states = Vec::with_capacity(horizon + 1);
    let mut sets = Vec::with_capacity(horizon + 1);

    rng.fill_normal(&mut noise);
    let mut x = &spec.a_star * &spec.x0 + DVector::from_column_slice(&noise);
    sets.push(schedule.initial());
    for t in 1..=horizon {
        // S_{t+1} is fixed before w_t is drawn.
        sets.push(schedule.next_set(t, x.as_slice())?);
        rng.fill_normal(&mut noise);
        let next = &spec.a_star * &x + DVector::from_column_slice(&noise);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::StateDiverged { step: t + 1 });
        }
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);

    let observed = states
        .iter()
        .zip(&sets)
        .map(|(x, s)| s.contains(x.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CensoredTrajectory {
        horizon,
        states,
        observed,
        sets,
        seed,
    })
}

/// A consecutive observed pair `(x_t, x_{t+1})` with the set `S_{t+1}`
/// that censored the response. In the general time-series form `x` is the
/// covariate and `y` the response.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub t: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub set: ObservableSet,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairedDataset {
    pub pairs: Vec<Pair>,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Every `t in 1..=T` with both `t` and `t + 1` observed, in time order.
pub fn extract_pairs(view: &CensoredView) -> PairedDataset {
    let pairs = (0..view.horizon)
        .filter_map(|k| match (&view.observations[k], &view.observations[k + 1]) {
            (Some(x), Some(y)) => Some(Pair {
                t: k + 1,
                x: x.clone(),
                y: y.clone(),
                set: view.sets[k + 1].clone(),
            }),
            _ => None,
        })
        .collect();
    PairedDataset { pairs }
}

/// First `floor(M / 2)` pairs for the warmup, the rest for estimation.
pub fn split_pairs(data: &PairedDataset) -> Result<(PairedDataset, PairedDataset)> {
    let m = data.len();
    if m < 2 {
        return Err(Error::InsufficientPairs {
            found: m,
            required: 2,
        });
    }
    let (head, tail) = data.pairs.split_at(m / 2);
    Ok((
        PairedDataset {
            pairs: head.to_vec(),
        },
        PairedDataset {
            pairs: tail.to_vec(),
        },
    ))
}

/// `sum_{s < T} A^s (A^s)^T`, via `G_{t+1} = I + A G_t A^T`, stopping early
/// once increments fall below `1e-12 ||G||_F`.
pub fn gramian(a: &DMatrix<f64>, horizon: usize) -> Result<DMatrix<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("gramian horizon must be >= 1".into()));
    }
    let d = a.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut g = eye.clone();
    for step in 1..horizon {
        let next = &eye + a * &g * a.transpose();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::GramianOverflow { steps: step + 1 });
        }
        let increment = (&next - &g).norm();
        let scale = next.norm();
        g = next;
        if increment < 1e-12 * scale {
            break;
        }
    }
    Ok(g)
}

/// `||A_hat - A_star||_Gamma = sqrt(tr((A_hat - A_star) Gamma (A_hat - A_star)^T))`.
pub fn error_gramian_norm(a_hat: &DMatrix<f64>, a_star: &DMatrix<f64>, gamma: &DMatrix<f64>) -> f64 {
    weighted_norm_sq(&(a_hat - a_star), gamma).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalConstants {
    pub beta_hat: f64,
    /// Smallest estimated survival over observed steps; `None` when no
    /// step in `1..=T` was observed.
    pub alpha_hat: Option<f64>,
    /// `(t, estimated N(A x_t, I; S_{t+1}))` for every observed `t <= T`.
    pub survival: Vec<(usize, f64)>,
    /// `(a, |B(a)|)` for each grid value.
    pub b_counts: Vec<(f64, usize)>,
}

impl EmpiricalConstants {
    pub fn b_count(&self, a: f64) -> usize {
        self.survival.iter().filter(|(_, s)| *s < a).count()
    }
}

/// Estimates the censoring constants of a run by Monte Carlo. Steps with no
/// hits report `0.5 / mc_samples`.
pub fn measure_constants(
    traj: &CensoredTrajectory,
    spec: &SystemSpec,
    alpha_grid: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<EmpiricalConstants> {
    if mc_samples < 1000 {
        return Err(Error::InvalidConfig(format!("mc_samples must be >= 1000, got {mc_samples}")));
    }
    check_dim(spec.dim(), traj.dim())?;
    let mut rng = NormalStream::new(seed);
    let floor = 0.5 / mc_samples as f64;
    let mut survival = Vec::new();
    for k in 0..traj.horizon {
        if !traj.observed[k] {
            continue;
        }
        let mu = &spec.a_star * &traj.states[k];
        let p = survival_fraction(mu.as_slice(), &traj.sets[k + 1], mc_samples, &mut rng)?;
        survival.push((k + 1, if p == 0.0 { floor } else { p }));
    }
    let alpha_hat = survival.iter().map(|(_, s)| *s).reduce(f64::min);
    let mut out = EmpiricalConstants {
        beta_hat: traj.beta_hat(),
        alpha_hat,
        survival,
        b_counts: Vec::new(),
    };
    out.b_counts = alpha_grid.iter().map(|&a| (a, out.b_count(a))).collect();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralStats {
    pub rho: f64,
    /// Condition number of the unit-column eigenvector matrix; infinite
    /// when the matrix is not diagonalizable.
    pub cond_u: f64,
    pub diagonalizable: bool,
}

fn complex_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(complex_eigenvalues(a)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Spectral radius and eigenvector conditioning of `a`.
///
/// Eigenvalues are clustered; each cluster of multiplicity `m` contributes
/// the `m` smallest right singular vectors of `a - lambda I`. A cluster
/// whose null space is too small marks the matrix as defective.
pub fn spectral_stats(a: &DMatrix<f64>) -> Result<SpectralStats> {
    let d = a.nrows();
    let eigs = complex_eigenvalues(a)?;
    let rho = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let scale = a.norm().max(1.0);

    let mut clusters: Vec<(Complex<f64>, usize)> = Vec::new();
    for l in &eigs {
        match clusters
            .iter_mut()
            .find(|(c, _)| (c - l).norm() <= 1e-8 * scale)
        {
            Some(entry) => entry.1 += 1,
            None => clusters.push((*l, 1)),
        }
    }

    let ac = a.map(|v| Complex::new(v, 0.0));
    let eye = DMatrix::<Complex<f64>>::identity(d, d);
    let mut columns: Vec<DVector<Complex<f64>>> = Vec::with_capacity(d);
    let mut diagonalizable = true;
    for (lambda, mult) in clusters {
        let shifted = &ac - &eye * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Eigen("SVD did not return singular vectors".into()))?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        for &k in order.iter().take(mult) {
            if svd.singular_values[k] > 1e-6 * scale {
                diagonalizable = false;
            }
            let v: DVector<Complex<f64>> = v_t.row(k).adjoint();
            columns.push(v.normalize());
        }
    }
    if !diagonalizable {
        return Ok(SpectralStats {
            rho,
            cond_u: f64::INFINITY,
            diagonalizable,
        });
    }
    let u = DMatrix::from_columns(&columns);
    let sv = u.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond_u = if min > 0.0 { max / min } else { f64::INFINITY };
    Ok(SpectralStats {
        rho,
        cond_u,
        diagonalizable: cond_u.is_finite(),
    })
}

/// Upper scale for `E ||x_t||^2` of a stable diagonalizable system:
/// `d cond(U)^2 / (1 - rho)`.
pub fn mean_square_state_bound(stats: &SpectralStats, d: usize) -> f64 {
    d as f64 * stats.cond_u.powi(2) / (1.0 - stats.rho)
}
