//! Command-line front end: parse a config, run a command, write a run
//! directory (CSV tables, summary.json, schema.json, manifest.json).
//!
//! Exit codes: 0 on success, 2 for configuration problems (unreadable or
//! invalid config, command/config mismatch), 3 for runtime failures.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use magsim::config::{ConfigError, SimConfig};
use magsim::output::{OutDir, OutputError, RunManifest};
use magsim::run::{
    run_calibrate, run_optimize_mode, run_pn_limit, run_simulate, run_spectrum, run_sweep,
    RunError, RunOptions, RunResult,
};

#[derive(Parser)]
#[command(
    name = "magsim",
    version,
    about = "Stochastic simulator of a two-cell RF atomic magnetometer",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured protocol end to end (signal and reference arms).
    Simulate(CommonArgs),
    /// Evaluate the entangled protocol across the configured sweep grid.
    Sweep(CommonArgs),
    /// Projection-noise-limited resolution of the configured RF window.
    PnLimit(CommonArgs),
    /// Two-pulse calibration of the readout coupling constant.
    Calibrate(CommonArgs),
    /// Scan the readout's temporal-mode decay rate for the best SNR.
    OptimizeMode(CommonArgs),
    /// Averaged periodogram of the simulated readout photocurrent.
    Spectrum(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration; built-in defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master random seed; shot i draws from stream i of this seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte-Carlo shots per arm.
    #[arg(long, default_value_t = 2000)]
    shots: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    /// Run shots serially; the ensemble is bit-identical either way.
    #[arg(long)]
    serial: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(e) => e.exit_code() as u8,
            CliError::Output(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Run(RunError::Config(e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    type Runner = fn(&SimConfig, &RunOptions) -> Result<RunResult, RunError>;
    let (name, args, runner): (&str, &CommonArgs, Runner) = match &cli.command {
        Command::Simulate(a) => ("simulate", a, run_simulate),
        Command::Sweep(a) => ("sweep", a, run_sweep),
        Command::PnLimit(a) => ("pn-limit", a, run_pn_limit),
        Command::Calibrate(a) => ("calibrate", a, run_calibrate),
        Command::OptimizeMode(a) => ("optimize-mode", a, run_optimize_mode),
        Command::Spectrum(a) => ("spectrum", a, run_spectrum),
    };

    let config_text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    let cfg = SimConfig::from_toml(&config_text)?;
    let opts = RunOptions {
        seed: args.seed,
        shots: args.shots,
        parallel: !args.serial,
    };

    let result = runner(&cfg, &opts)?;

    let mut out = OutDir::create(&args.out)?;
    for t in &result.tables {
        out.write_csv(&t.name, &t.description, &t.columns, &t.rows)?;
    }
    out.write_json(
        "summary.json",
        "all derived quantities of this run",
        &result.summary,
    )?;
    let written: Vec<String> = result
        .tables
        .iter()
        .map(|t| t.name.clone())
        .chain(["summary.json".to_string()])
        .collect();
    out.finish(RunManifest::new(name, &config_text, opts.seed, opts.shots))?;

    println!(
        "{name}: wrote {} + schema.json, manifest.json to {}",
        written.join(", "),
        args.out.display()
    );
    if let Some(line) = headline(name, &result.summary) {
        println!("{line}");
    }
    Ok(())
}

/// One human-oriented line with the run's key numbers.
fn headline(name: &str, s: &serde_json::Value) -> Option<String> {
    let f = |v: &serde_json::Value| v.as_f64();
    match name {
        "simulate" => {
            if let Some(c) = s.get("calibration") {
                Some(format!(
                    "kappa^2 = {:.4} +- {:.4} (true {:.4})",
                    f(&c["kappa_squared_estimate"])?,
                    f(&c["std_error"])?,
                    f(&c["kappa_squared_true"])?,
                ))
            } else {
                Some(format!(
                    "SNR = {:.3} (predicted {:.3}), sensitivity {:.3e} T/sqrt(Hz) over the RF window",
                    f(&s["measured"]["snr"])?,
                    f(&s["predicted"]["snr"])?,
                    f(&s["measured"]["sensitivity_rf_window_t_per_sqrt_hz"])?,
                ))
            }
        }
        "pn-limit" => Some(format!(
            "b_min = {:.3e} T, sensitivity = {:.3e} T/sqrt(Hz)",
            f(&s["pn_limit"]["b_min_t"])?,
            f(&s["pn_limit"]["sensitivity_t_per_sqrt_hz"])?,
        )),
        "calibrate" => Some(format!(
            "kappa^2 = {:.4} +- {:.4} (true {:.4})",
            f(&s["calibration"]["kappa_squared_estimate"])?,
            f(&s["calibration"]["std_error"])?,
            f(&s["calibration"]["kappa_squared_true"])?,
        )),
        "optimize-mode" => Some(format!(
            "best mode gamma = {:.4} /s ({:.3} of the total decay rate)",
            f(&s["mode_optimum"]["gamma_1_per_s"])?,
            f(&s["mode_optimum"]["gamma_over_total_decay"])?,
        )),
        "spectrum" => Some(format!(
            "peak at {:.1} Hz (carrier {:.1} Hz)",
            f(&s["spectrum"]["peak_freq_hz"])?,
            f(&s["carrier_hz"])?,
        )),
        _ => None,
    }
}
