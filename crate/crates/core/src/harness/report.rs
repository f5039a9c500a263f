//! Experiment reports: one JSON record per line plus a flat CSV view.
//!
//! The report carries no timestamps; the run time is written to a
//! separate file so that identical configs produce byte-identical reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{BranchCounts, InvariantVerdicts};
use crate::harness::persist::format_float;

pub const SERIES_SON_SG: &str = "son_sg";
pub const SERIES_OLS_PAIRS: &str = "ols_pairs";
pub const SERIES_OLS_FULL: &str = "ols_full";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub horizon: usize,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// `||A_hat - A_*||_{Gamma_T}`.
    pub error: Option<f64>,
    pub error_frobenius: Option<f64>,
    pub ols_pairs_error: Option<f64>,
    pub ols_full_error: Option<f64>,
    pub pairs: Option<usize>,
    pub beta_hat: Option<f64>,
    pub alpha_hat: Option<f64>,
    /// `(a, |B(a)|)` per grid value.
    pub b_counts: Vec<(f64, usize)>,
    pub branch_counts: Option<BranchCounts>,
    pub invariants: Option<InvariantVerdicts>,
}

impl CellRecord {
    pub fn failed(horizon: usize, seed: u64, reason: String) -> Self {
        Self {
            horizon,
            seed,
            ok: false,
            reason: Some(reason),
            error: None,
            error_frobenius: None,
            ols_pairs_error: None,
            ols_full_error: None,
            pairs: None,
            beta_hat: None,
            alpha_hat: None,
            b_counts: Vec::new(),
            branch_counts: None,
            invariants: None,
        }
    }

    pub fn series_value(&self, series: &str) -> Option<f64> {
        match series {
            SERIES_SON_SG => self.error,
            SERIES_OLS_PAIRS => self.ols_pairs_error,
            SERIES_OLS_FULL => self.ols_full_error,
            _ => None,
        }
    }
}

/// Summary of one error series at one horizon. Quartiles are omitted when
/// fewer than two cells succeeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub horizon: usize,
    pub series: String,
    pub n: usize,
    pub median: f64,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

/// Across-seed average of `|B(a)|` with a normal-approximation 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRecord {
    pub horizon: usize,
    pub a: f64,
    pub n: usize,
    pub mean_b: f64,
    pub ci_halfwidth: Option<f64>,
    pub median_beta_hat: Option<f64>,
    pub min_alpha_hat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Config { toml: String },
    Cell(CellRecord),
    Aggregate(AggregateRecord),
    Constants(ConstantsRecord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    /// Echo of the config that produced the report.
    pub config_toml: String,
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRecord>,
    pub constants: Vec<ConstantsRecord>,
}

/// Median and quartiles by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

impl ExperimentReport {
    /// Sorts cells by `(horizon, seed)` and derives every aggregate from them.
    pub fn from_cells(config_toml: String, mut cells: Vec<CellRecord>) -> Self {
        cells.sort_by_key(|c| (c.horizon, c.seed));
        let aggregates = aggregate(&cells);
        let constants = constants(&cells);
        Self {
            config_toml,
            cells,
            aggregates,
            constants,
        }
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| !c.ok)
    }

    pub fn horizons(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.cells.iter().map(|c| c.horizon).collect();
        h.dedup();
        h
    }

    pub fn aggregate_for(&self, series: &str, horizon: usize) -> Option<&AggregateRecord> {
        self.aggregates
            .iter()
            .find(|a| a.series == series && a.horizon == horizon)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |line: &Line| -> Result<()> {
            out.push_str(&serde_json::to_string(line)?);
            out.push('\n');
            Ok(())
        };
        push(&Line::Config {
            toml: self.config_toml.clone(),
        })?;
        for c in &self.cells {
            push(&Line::Cell(c.clone()))?;
        }
        for a in &self.aggregates {
            push(&Line::Aggregate(a.clone()))?;
        }
        for c in &self.constants {
            push(&Line::Constants(c.clone()))?;
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let mut report = ExperimentReport {
            config_toml: String::new(),
            cells: Vec::new(),
            aggregates: Vec::new(),
            constants: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line)
                .map_err(|e| Error::parse(origin, format!("line {}: {e}", i + 1)))?;
            match parsed {
                Line::Config { toml } => report.config_toml = toml,
                Line::Cell(c) => report.cells.push(c),
                Line::Aggregate(a) => report.aggregates.push(a),
                Line::Constants(c) => report.constants.push(c),
            }
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&fs::read_to_string(path)?, path)
    }

    /// One row per cell.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        let mut out = String::from(
            "horizon,seed,ok,error,error_frobenius,ols_pairs_error,ols_full_error,pairs,beta_hat,alpha_hat,censor_aware,censor_oblivious,exhausted,invariants_pass,reason\n",
        );
        for c in &self.cells {
            let (aware, oblivious, exhausted) = c
                .branch_counts
                .as_ref()
                .map(|b| {
                    (
                        b.censor_aware.to_string(),
                        b.censor_oblivious.to_string(),
                        b.exhausted.to_string(),
                    )
                })
                .unwrap_or_default();
            let reason = c
                .reason
                .as_deref()
                .map(|r| format!("\"{}\"", r.replace('"', "\"\"")))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.horizon,
                c.seed,
                c.ok,
                opt(c.error),
                opt(c.error_frobenius),
                opt(c.ols_pairs_error),
                opt(c.ols_full_error),
                c.pairs.map(|p| p.to_string()).unwrap_or_default(),
                opt(c.beta_hat),
                opt(c.alpha_hat),
                aware,
                oblivious,
                exhausted,
                c.invariants
                    .as_ref()
                    .map(|v| v.all_pass().to_string())
                    .unwrap_or_default(),
                reason,
            );
        }
        out
    }
}

fn aggregate(cells: &[CellRecord]) -> Vec<AggregateRecord> {
    let mut horizons: Vec<usize> = cells.iter().map(|c| c.horizon).collect();
    horizons.dedup();
    let mut out = Vec::new();
    for series in [SERIES_SON_SG, SERIES_OLS_PAIRS, SERIES_OLS_FULL] {
        for &h in &horizons {
            let mut v: Vec<f64> = cells
                .iter()
                .filter(|c| c.ok && c.horizon == h)
                .filter_map(|c| c.series_value(series))
                .collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(f64::total_cmp);
            let spread = v.len() >= 2;
            out.push(AggregateRecord {
                horizon: h,
                series: series.to_string(),
                n: v.len(),
                median: quantile(&v, 0.5),
                q1: spread.then(|| quantile(&v, 0.25)),
                q3: spread.then(|| quantile(&v, 0.75)),
            });
        }
    }
    out
}

fn constants(cells: &[CellRecord]) -> Vec<ConstantsRecord> {
    let mut horizons: Vec<usize> = cells.iter().map(|c| c.horizon).collect();
    horizons.dedup();
    let mut out = Vec::new();
    for &h in &horizons {
        let ok: Vec<&CellRecord> = cells.iter().filter(|c| c.ok && c.horizon == h).collect();
        let Some(first) = ok.iter().find(|c| !c.b_counts.is_empty()) else {
            continue;
        };
        let betas: Vec<f64> = ok.iter().filter_map(|c| c.beta_hat).collect();
        let min_alpha = ok
            .iter()
            .filter_map(|c| c.alpha_hat)
            .reduce(f64::min);
        for (j, &(a, _)) in first.b_counts.iter().enumerate() {
            let b: Vec<f64> = ok
                .iter()
                .filter_map(|c| c.b_counts.get(j).map(|(_, n)| *n as f64))
                .collect();
            let n = b.len();
            let mean = b.iter().sum::<f64>() / n as f64;
            let ci = (n >= 2).then(|| {
                let var = b.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            });
            out.push(ConstantsRecord {
                horizon: h,
                a,
                n,
                mean_b: mean,
                ci_halfwidth: ci,
                median_beta_hat: median(&betas),
                min_alpha_hat: min_alpha,
            });
        }
    }
    out
}
