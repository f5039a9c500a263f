//! Experiment configuration in TOML.
//!
//! ```toml
//! horizons = [4000, 16000, 64000]
//! seeds = [1, 2, 3]
//! output_dir = "out"
//!
//! [system]
//! kind = "scaled_rotation"
//! rho = 0.9
//! angle = 0.7
//!
//! [schedule]
//! type = "static"
//! set = { type = "axis_box", lower = [-2.0, -2.0], upper = [2.0, 2.0] }
//!
//! [estimator]
//! alpha = 0.25
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SonSgConfig;
use crate::linalg::matrix_from_rows;
use crate::rng::NormalStream;
use crate::sets::SetSchedule;
use crate::simulator::SystemSpec;

/// The true system, given explicitly or by a named generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Matrix {
        entries: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<Vec<f64>>,
    },
    ScaledIdentity {
        dim: usize,
        rho: f64,
    },
    /// `rho` times the planar rotation by `angle` radians.
    ScaledRotation {
        rho: f64,
        angle: f64,
    },
    /// `V diag(lambda) V^{-1}` with a random well-conditioned `V` and real
    /// eigenvalues of largest modulus `rho`.
    RandomDiagonalizable {
        dim: usize,
        rho: f64,
        seed: u64,
    },
}

impl SystemConfig {
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            SystemConfig::Matrix { entries, .. } => matrix_from_rows(entries),
            SystemConfig::ScaledIdentity { dim, rho } => {
                if *dim == 0 {
                    return Err(Error::InvalidConfig("system.dim must be positive".into()));
                }
                Ok(DMatrix::identity(*dim, *dim) * *rho)
            }
            SystemConfig::ScaledRotation { rho, angle } => {
                let (s, c) = angle.sin_cos();
                Ok(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * *rho)
            }
            SystemConfig::RandomDiagonalizable { dim, rho, seed } => {
                random_diagonalizable(*dim, *rho, *seed)
            }
        }
    }

    pub fn build(&self) -> Result<SystemSpec> {
        let a = self.matrix()?;
        match self {
            SystemConfig::Matrix { x0: Some(x0), .. } => {
                SystemSpec::with_initial_state(a, DVector::from_column_slice(x0))
            }
            _ => SystemSpec::new(a),
        }
    }
}

fn random_diagonalizable(dim: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    if dim == 0 {
        return Err(Error::InvalidConfig("system.dim must be positive".into()));
    }
    let mut rng = NormalStream::new(seed);
    for _ in 0..1000 {
        let v = DMatrix::from_fn(dim, dim, |_, _| rng.normal());
        let sv = v.singular_values();
        let cond = sv.max() / sv.min();
        if !(cond < 10.0 * dim as f64) {
            continue;
        }
        let Some(v_inv) = v.clone().try_inverse() else {
            continue;
        };
        let lambdas = DVector::from_fn(dim, |i, _| {
            if i == 0 {
                rho
            } else {
                rho * (2.0 * rng.uniform() - 1.0)
            }
        });
        return Ok(v * DMatrix::from_diagonal(&lambdas) * v_inv);
    }
    Err(Error::InvalidConfig(
        "could not draw a well-conditioned eigenbasis".into(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Least squares on the observed pairs, ignoring censoring.
    pub ols_pairs: bool,
    /// Least squares on the full uncensored trajectory (oracle).
    pub ols_full: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ols_pairs: true,
            ols_full: true,
        }
    }
}

/// Monte Carlo measurement of the censoring constants per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub alpha_grid: Vec<f64>,
    pub mc_samples: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            alpha_grid: vec![0.01],
            mc_samples: 2000,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub save_trajectories: bool,
    pub system: SystemConfig,
    pub schedule: SetSchedule,
    #[serde(default)]
    pub estimator: SonSgConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        cfg.validate()
            .map_err(|e| Error::parse(origin, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::InvalidConfig("horizons must not be empty".into()));
        }
        if let Some(t) = self.horizons.iter().find(|t| **t < 2) {
            return Err(Error::InvalidConfig(format!("horizons must be >= 2, got {t}")));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.parallelism == Some(0) {
            return Err(Error::InvalidConfig("parallelism must be at least 1".into()));
        }
        let spec = self.system.build()?;
        if spec.dim() != self.schedule.dim() {
            return Err(Error::InvalidConfig(format!(
                "system has dimension {} but schedule has dimension {}",
                spec.dim(),
                self.schedule.dim()
            )));
        }
        self.estimator.validate()?;
        if let Some(m) = &self.measure {
            if m.mc_samples < 1000 {
                return Err(Error::InvalidConfig("measure.mc_samples must be >= 1000".into()));
            }
        }
        Ok(())
    }
}
