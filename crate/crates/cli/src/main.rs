use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use osscal_cli::stages::{self, CalibrateMode};
use osscal_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "osscal", version, about = "Multi-output calibration with on-site surrogates")]
struct Cli {
    /// key = value configuration file; defaults apply to missing keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides one key, e.g. --set mcmc_samples=5000. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Field and simulation designs.
    Design,
    /// Runs the synthetic simulator and field process on the designs.
    Simulate,
    /// Fits one surrogate per site and output.
    FitOss,
    /// Discrepancy bases and PC surrogates.
    Pca,
    Calibrate {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Predicts at the new sites from the posterior.
    Predict,
    /// Leave-one-site-out cross-validation with and without bias correction.
    Loocv,
    /// Summary tables from the earlier stages.
    Report,
    /// Every stage in order.
    Run,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ModularPc,
    JointMap,
    Bayes,
    UnivariateCompare,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {o:?}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Design => stages::design(&cfg),
        Command::Simulate => stages::simulate(&cfg),
        Command::FitOss => stages::fit_oss(&cfg),
        Command::Pca => stages::pca(&cfg),
        Command::Calibrate { mode } => stages::calibrate(
            &cfg,
            match mode {
                Mode::ModularPc => CalibrateMode::ModularPc,
                Mode::JointMap => CalibrateMode::JointMap,
                Mode::Bayes => CalibrateMode::Bayes,
                Mode::UnivariateCompare => CalibrateMode::UnivariateCompare,
            },
        ),
        Command::Predict => stages::predict(&cfg),
        Command::Loocv => stages::loocv(&cfg),
        Command::Report => stages::report(&cfg),
        Command::Run => stages::run_all(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
