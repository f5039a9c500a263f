//! Grid runs over horizons x seeds.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::baselines::{ols_full, ols_on_pairs};
use crate::estimator::learn_censored_lds;
use crate::harness::config::ExperimentConfig;
use crate::harness::persist::save_trajectory;
use crate::harness::plot::render_svg;
use crate::harness::report::{CellRecord, ExperimentReport};
use crate::rng::NormalStream;
use crate::simulator::{
    error_gramian_norm, extract_pairs, gramian, measure_constants, simulate, SystemSpec,
};

pub const REPORT_FILE: &str = "report.jsonl";
pub const REPORT_CSV: &str = "report.csv";
pub const PLOT_FILE: &str = "error_vs_horizon.svg";
pub const TIMESTAMP_FILE: &str = "run_timestamp.txt";

pub const ESTIMATOR_STREAM: u64 = 1;
const MEASURE_STREAM: u64 = 2;

/// Independent seed for a secondary consumer of a cell's randomness.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    NormalStream::with_stream(seed, stream).next_u64()
}

/// Runs one `(horizon, seed)` cell. The simulation uses `seed` directly, so
/// cells sharing a seed share a trajectory prefix.
pub fn run_cell(
    cfg: &ExperimentConfig,
    spec: &SystemSpec,
    horizon: usize,
    seed: u64,
    trajectory_dir: Option<&Path>,
) -> Result<CellRecord> {
    let traj = simulate(spec, &cfg.schedule, horizon, seed)?;
    if let Some(dir) = trajectory_dir {
        let path = dir.join(format!("T{horizon}_seed{seed}.csv"));
        save_trajectory(&path, &traj, Some(spec), Some(&cfg.schedule))?;
    }
    let view = traj.censored_view();
    let (a_hat, report) = learn_censored_lds(
        &view,
        &cfg.estimator,
        derive_seed(seed, ESTIMATOR_STREAM),
        Some(&spec.a_star),
    )?;
    let gamma = gramian(&spec.a_star, horizon)?;
    let err = |a: &nalgebra::DMatrix<f64>| error_gramian_norm(a, &spec.a_star, &gamma);

    let ols_pairs_error = if cfg.baselines.ols_pairs {
        ols_on_pairs(&extract_pairs(&view)).ok().map(|a| err(&a))
    } else {
        None
    };
    let ols_full_error = if cfg.baselines.ols_full {
        ols_full(&traj).ok().map(|a| err(&a))
    } else {
        None
    };
    let (alpha_hat, b_counts) = match &cfg.measure {
        Some(m) => {
            let c = measure_constants(
                &traj,
                spec,
                &m.alpha_grid,
                m.mc_samples,
                derive_seed(seed, MEASURE_STREAM),
            )?;
            (c.alpha_hat, c.b_counts)
        }
        None => (None, Vec::new()),
    };

    Ok(CellRecord {
        horizon,
        seed,
        ok: true,
        reason: None,
        error: Some(err(&a_hat)),
        error_frobenius: Some((&a_hat - &spec.a_star).norm()),
        ols_pairs_error,
        ols_full_error,
        pairs: Some(report.total_pairs),
        beta_hat: Some(traj.beta_hat()),
        alpha_hat,
        b_counts,
        branch_counts: Some(report.branch_counts),
        invariants: Some(report.invariants),
    })
}

/// Runs the full grid on a pool of `parallelism` threads (default: the
/// config's value, else all cores). Failed cells are kept with their reason.
pub fn run_experiment(cfg: &ExperimentConfig, parallelism: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let spec = cfg.system.build()?;
    let threads = parallelism.or(cfg.parallelism).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let trajectory_dir: Option<PathBuf> = if cfg.save_trajectories {
        let dir = cfg.output_dir.join("trajectories");
        fs::create_dir_all(&dir)?;
        Some(dir)
    } else {
        None
    };
    let grid: Vec<(usize, u64)> = cfg
        .horizons
        .iter()
        .flat_map(|&h| cfg.seeds.iter().map(move |&s| (h, s)))
        .collect();

    let cells: Vec<CellRecord> = pool.install(|| {
        grid.par_iter()
            .map(|&(h, s)| match run_cell(cfg, &spec, h, s, trajectory_dir.as_deref()) {
                Ok(c) => {
                    info!("cell T={h} seed={s}: error {:?}", c.error);
                    c
                }
                Err(e) => {
                    warn!("cell T={h} seed={s} failed: {e}");
                    CellRecord::failed(h, s, e.to_string())
                }
            })
            .collect()
    });
    // Thread count does not affect results, so it is left out of the echo.
    let echo = ExperimentConfig {
        parallelism: None,
        ..cfg.clone()
    };
    Ok(ExperimentReport::from_cells(echo.to_toml_string()?, cells))
}

/// Writes the report, its CSV view, the plot and the timestamp into `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), report.to_jsonl()?)?;
    fs::write(dir.join(REPORT_CSV), report.to_csv())?;
    fs::write(dir.join(PLOT_FILE), render_svg(report))?;
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::write(dir.join(TIMESTAMP_FILE), format!("{secs}\n"))?;
    Ok(())
}
