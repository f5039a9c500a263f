use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use censored_lds::estimator::SonSgConfig;
use censored_lds::harness::experiment::PLOT_FILE;
use censored_lds::harness::{
    load_estimator_config, run_estimate, run_experiment, run_verify, save_trajectory, write_outputs,
    ExperimentConfig,
};
use censored_lds::simulator::{extract_pairs, simulate};

#[derive(Parser)]
#[command(name = "censored-lds", version, about = "Learn linear dynamical systems from censored observations")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seeds with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Debug-level logging on stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every (horizon, seed) of a config and save the trajectories.
    Simulate,
    /// Run the estimator on a saved trajectory.
    Estimate {
        /// Trajectory CSV (its `.meta.toml` sidecar must sit next to it).
        trajectory: PathBuf,
    },
    /// Run the full horizon x seed grid and write report and plot.
    Experiment,
    /// Run the fixed-seed property battery.
    Verify,
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let path = g.config.as_deref().context("--config <path> is required")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    if g.parallelism.is_some() {
        cfg.parallelism = g.parallelism;
    }
    Ok(cfg)
}

fn cmd_simulate(g: &GlobalArgs) -> Result<ExitCode> {
    let cfg = load_config(g)?;
    let spec = cfg.system.build()?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    for &horizon in &cfg.horizons {
        for &seed in &cfg.seeds {
            let traj = simulate(&spec, &cfg.schedule, horizon, seed)?;
            let path = cfg.output_dir.join(format!("T{horizon}_seed{seed}.csv"));
            save_trajectory(&path, &traj, Some(&spec), Some(&cfg.schedule))?;
            let pairs = extract_pairs(&traj.censored_view()).len();
            println!(
                "{}: T={horizon} seed={seed} beta_hat={:.4} pairs={pairs}",
                path.display(),
                traj.beta_hat()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate(g: &GlobalArgs, trajectory: &Path) -> Result<ExitCode> {
    let cfg = match &g.config {
        Some(p) => load_estimator_config(p)?,
        None => SonSgConfig::default(),
    };
    let out_dir = g
        .out
        .clone()
        .or_else(|| trajectory.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let out = run_estimate(trajectory, &cfg, g.seed, &out_dir)?;
    let r = &out.record;
    println!("a_hat = {:?}", r.a_hat);
    if let Some(e) = r.error_frobenius {
        println!("error (Frobenius) = {e:.6}");
    }
    if let Some(e) = r.error_gramian {
        println!("error (Gramian) = {e:.6}");
    }
    println!(
        "pairs = {} (warmup {}, online {}); branches: aware {}, oblivious {}, exhausted {}",
        r.report.total_pairs,
        r.report.warmup_pairs,
        r.report.estimation_pairs,
        r.report.branch_counts.censor_aware,
        r.report.branch_counts.censor_oblivious,
        r.report.branch_counts.exhausted
    );
    let pass = r.report.invariants.all_pass();
    println!("invariants: {}", if pass { "pass" } else { "FAIL" });
    println!("report: {}", out.report_path.display());
    if let Some(p) = &out.diagnostics_path {
        println!("diagnostics: {}", p.display());
    }
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_experiment(g: &GlobalArgs) -> Result<ExitCode> {
    let cfg = load_config(g)?;
    let report = run_experiment(&cfg, cfg.parallelism)?;
    write_outputs(&report, &cfg.output_dir)?;
    for h in report.horizons() {
        if let Some(a) = report.aggregate_for(censored_lds::harness::report::SERIES_SON_SG, h) {
            println!("T={h}: median error {:.6} over {} seeds", a.median, a.n);
        }
    }
    let failed: Vec<_> = report.cells.iter().filter(|c| !c.ok).collect();
    for c in &failed {
        eprintln!(
            "cell T={} seed={} failed: {}",
            c.horizon,
            c.seed,
            c.reason.as_deref().unwrap_or("unknown")
        );
    }
    println!("plot: {}", cfg.output_dir.join(PLOT_FILE).display());
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_verify(g: &GlobalArgs) -> Result<ExitCode> {
    let verdicts = run_verify(g.parallelism)?;
    let mut ok = true;
    for v in &verdicts {
        println!("[{}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
        ok &= v.passed;
    }
    if let Some(out) = &g.out {
        fs::create_dir_all(out)?;
        let text: String = verdicts
            .iter()
            .map(|v| format!("{},{},\"{}\"\n", v.name, v.passed, v.detail.replace('"', "\"\"")))
            .collect();
        fs::write(out.join("verify.csv"), format!("suite,passed,detail\n{text}"))?;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.global.parallelism == Some(0) {
        bail!("--parallelism must be at least 1");
    }
    info!("starting");
    match &cli.command {
        Command::Simulate => cmd_simulate(&cli.global),
        Command::Estimate { trajectory } => cmd_estimate(&cli.global, trajectory),
        Command::Experiment => cmd_experiment(&cli.global),
        Command::Verify => cmd_verify(&cli.global),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
