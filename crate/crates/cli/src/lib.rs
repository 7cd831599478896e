//! Command-line runner for ridge IV experiments.
//!
//! Exit codes: 0 on success, 1 on a runtime failure or a failed verification, 2 on a
//! bad command line or config.

pub mod config;
pub mod output;
pub mod plot;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ridgeiv::montecarlo::DEFAULT_SWEEP_REPS;
use ridgeiv::{
    first_stage, fit_ridge_iv, generate_dataset, reduced_form, run_sweep, with_workers, DgpParams,
    PenaltyRate, PenaltySchedule, SweepConfig,
};

use config::{
    read_config, validate_sweep, Command, ConfigError, ExperimentConfig, SingleRunFile, SweepFile,
    VerifyFile,
};
use verify::{Regime, VerifySetup};

pub const DEFAULT_SEED: u64 = 1;
pub const THREADS_ENV: &str = "RIDGEIV_THREADS";
pub const SWEEP_CSV: &str = "mse_sweep.csv";
pub const RAW_CSV: &str = "raw_estimates.csv";
pub const SINGLE_RUN_CSV: &str = "single_run.csv";
const DEFAULT_SINGLE_N: usize = 150;

#[derive(Debug, Parser)]
#[command(name = "ridgeiv", version, about = "Ridge IV Monte Carlo experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// MSE sweep over the first-stage slope.
    SweepPi(SweepArgs),
    /// MSE sweep over the effect size.
    SweepBeta(SweepArgs),
    /// Compare simulated sampling distributions with their closed-form limits.
    VerifyAsymptotics(VerifyArgs),
    /// Fit every estimator on one simulated sample.
    SingleRun(SingleArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON config; missing fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repetitions per grid point (overrides the config).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write one SVG plot per lambda.
    #[arg(long)]
    pub plots: bool,
    /// Write every repetition's estimate.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Regime::All)]
    pub regime: Regime,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SingleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

/// Worker count from `RIDGEIV_THREADS`, defaulting to the available parallelism.
pub fn worker_count() -> Result<usize, ConfigError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(ConfigError(format!(
                "{THREADS_ENV}: expected a positive integer, got `{v}`"
            ))),
        },
        Err(std::env::VarError::NotPresent) => {
            Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
        }
        Err(e) => Err(ConfigError(format!("{THREADS_ENV}: {e}"))),
    }
}

/// Resolves a sweep command line into a validated experiment.
pub fn sweep_experiment(
    command: Command,
    args: &SweepArgs,
) -> Result<ExperimentConfig, ConfigError> {
    let defaults = match command {
        Command::SweepPi => SweepConfig::pi_sweep(DEFAULT_SWEEP_REPS, DEFAULT_SEED),
        Command::SweepBeta => SweepConfig::beta_sweep(DEFAULT_SWEEP_REPS, DEFAULT_SEED),
        _ => unreachable!("not a sweep command"),
    };
    let file: SweepFile = read_config(args.config.as_deref())?;
    let mut sweep = file.into_sweep(defaults)?;
    if let Some(seed) = args.seed {
        sweep.master_seed = seed;
    }
    if let Some(reps) = args.reps {
        sweep.reps = reps;
    }
    sweep.keep_estimates = args.raw;
    validate_sweep(&sweep)?;
    Ok(ExperimentConfig {
        command,
        sweep: Some(sweep),
        output_dir: args.out.clone(),
        emit_plots: args.plots,
        emit_raw: args.raw,
    })
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Cmd::SweepPi(a) => run_sweep_command(&sweep_experiment(Command::SweepPi, &a)?),
        Cmd::SweepBeta(a) => run_sweep_command(&sweep_experiment(Command::SweepBeta, &a)?),
        Cmd::VerifyAsymptotics(a) => run_verify(&a),
        Cmd::SingleRun(a) => run_single(&a),
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn run_sweep_command(exp: &ExperimentConfig) -> Result<bool> {
    let sweep = exp
        .sweep
        .as_ref()
        .expect("sweep commands carry a sweep config");
    let workers = worker_count()?;
    create_out_dir(&exp.output_dir)?;
    let result = with_workers(workers, || run_sweep(sweep))??;

    let csv = exp.output_dir.join(SWEEP_CSV);
    output::write_sweep_file(&result, &csv)?;
    println!("wrote {}", csv.display());
    if exp.emit_plots {
        for lambda in result.lambdas() {
            let path = exp.output_dir.join(plot::plot_file_name(lambda));
            plot::emit_plot(&result, lambda, &path)?;
            println!("wrote {}", path.display());
        }
    }
    if exp.emit_raw {
        let path = exp.output_dir.join(RAW_CSV);
        output::write_raw_estimates(&result, &path)?;
        println!("wrote {}", path.display());
    }
    let degenerate: usize = result.cells.iter().map(|c| c.n_degenerate).sum();
    if degenerate > 0 {
        println!("{degenerate} repetitions had a zero denominator and were skipped");
    }
    Ok(true)
}

fn run_verify(args: &VerifyArgs) -> Result<bool> {
    let file: VerifyFile = read_config(args.config.as_deref())?;
    let reps = args.reps.unwrap_or(verify::DEFAULT_VERIFY_REPS);
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let setups = args
        .regime
        .expand()
        .into_iter()
        .map(|r| VerifySetup::resolve(r, &file, reps, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let workers = worker_count()?;

    let mut all_pass = true;
    for setup in &setups {
        let report = with_workers(workers, || verify::run_regime(setup))??;
        println!(
            "regime {} (n = {}, reps = {}, kept = {}, penalty {:?} lambda0 = {})",
            setup.regime,
            setup.n,
            setup.reps,
            report.kept_reps,
            setup.schedule.rate,
            setup.schedule.lambda0
        );
        for check in &report.checks {
            println!("  {check}");
        }
        let verdict = if report.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {}", setup.regime);
        all_pass &= report.passed();
    }
    Ok(all_pass)
}

fn run_single(args: &SingleArgs) -> Result<bool> {
    let file: SingleRunFile = read_config(args.config.as_deref())?;
    let params = config::merge_params(DgpParams::baseline_design(1.0), file.params.as_ref())?;
    let n = file.n.unwrap_or(DEFAULT_SINGLE_N);
    if n < ridgeiv::dgp::MIN_OBSERVATIONS {
        return Err(ConfigError(format!("field `n`: must be >= 3, got {n}")).into());
    }
    let rate = file.penalty_rate.unwrap_or(PenaltyRate::LinearN);
    let lambdas = file.lambda_values.unwrap_or_else(|| vec![0.0, 4.0, 10.0]);
    let schedules = lambdas
        .iter()
        .map(|&l| {
            PenaltySchedule::new(rate, l).map_err(|_| {
                ConfigError(format!(
                    "field `lambda_values`: {l} is not a finite value >= 0"
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);

    create_out_dir(&args.out)?;
    let data = generate_dataset(&params, n, seed)?;
    let fs = first_stage(&data)?;
    let rf = reduced_form(&data)?;
    println!("n = {n}, seed = {seed}");
    println!(
        "first stage:  D = {:.6} + {:.6} Z  (residual sd {:.6})",
        fs.intercept, fs.slope, fs.residual_sd
    );
    println!(
        "reduced form: Y = {:.6} + {:.6} Z  (residual sd {:.6})",
        rf.intercept, rf.slope, rf.residual_sd
    );
    let mut rows = Vec::with_capacity(schedules.len());
    for (l, s) in lambdas.iter().zip(&schedules) {
        let e = fit_ridge_iv(&data, s)?;
        println!(
            "lambda = {l}: beta1_hat = {:.6} (true {})",
            e.beta1_hat, params.beta1
        );
        rows.push((*l, e));
    }
    let path = args.out.join(SINGLE_RUN_CSV);
    output::write_estimates(&rows, &path)?;
    println!("wrote {}", path.display());
    Ok(true)
}
