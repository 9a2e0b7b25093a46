use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use burgers_lab_cli::config::{key_help, parse_text};
use burgers_lab_cli::{
    run_with_threads, table_exit_code, write_atomic, CliError, Experiment, ExperimentConfig,
};

/// Moment, asymptotic and Monte Carlo experiments for the linear-profile
/// Burgers flow observed through noisy particle positions.
#[derive(Parser)]
#[command(name = "burgers-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output CSV; written atomically. Prints to stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Monte Carlo seed; overrides the `seed` key.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; the output does not depend on it.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Override one config key, e.g. `--set p=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact inviscid solution on the grid.
    Exact(Common),
    /// Observable density by quadrature.
    Density(Common),
    /// Conditional mean by quadrature, with closed-form or asymptotic predictions.
    Mean(Common),
    /// Conditional variance by quadrature.
    Variance(Common),
    /// Kernel estimates from exact samples, against quadrature.
    Mc(Common),
    /// Near-critical mean, blow-up coefficient and variance against their asymptotes.
    Asymptotics(Common),
    /// ε-slope of |û| for each p, with a blowup-like or decay-like verdict.
    ThresholdSweep(Common),
    /// Gaussian initial density against the p = 0 closed form.
    GaussianF(Common),
    /// Near-origin slope for power-law initial densities and its (1+αt) class.
    PowerlawF(Common),
    /// Residual of the viscous Burgers equation on the p = 0 closed forms.
    ViscousResidual(Common),
    /// Induced velocity, mean and correction, with the decomposition residual.
    Induced(Common),
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Exact(c) => (Experiment::Exact, c),
            Command::Density(c) => (Experiment::Density, c),
            Command::Mean(c) => (Experiment::Mean, c),
            Command::Variance(c) => (Experiment::Variance, c),
            Command::Mc(c) => (Experiment::MonteCarlo, c),
            Command::Asymptotics(c) => (Experiment::Asymptotics, c),
            Command::ThresholdSweep(c) => (Experiment::ThresholdSweep, c),
            Command::GaussianF(c) => (Experiment::GaussianF, c),
            Command::PowerlawF(c) => (Experiment::PowerLawF, c),
            Command::ViscousResidual(c) => (Experiment::ViscousResidual, c),
            Command::Induced(c) => (Experiment::Induced, c),
        }
    }
}

fn load(common: &Common) -> Result<BTreeMap<String, String>, CliError> {
    let mut raw = match &common.config {
        Some(path) => parse_text(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::ConfigInvalid {
            key: o.clone(),
            reason: "expected KEY=VALUE".into(),
        })?;
        raw.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(seed) = common.seed {
        raw.insert("seed".into(), seed.to_string());
    }
    Ok(raw)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (experiment, common) = cli.command.split();
    if common.threads == Some(0) {
        return Err(CliError::ConfigInvalid {
            key: "threads".into(),
            reason: "must be >= 1".into(),
        });
    }
    let cfg = ExperimentConfig::from_map(experiment, &load(&common)?)?;
    let table = run_with_threads(&cfg, common.threads)?;
    for r in table
        .rows
        .iter()
        .filter(|r| r.status == burgers_lab_cli::Status::Failed)
    {
        eprintln!("{}", r.note);
    }
    let csv = table.to_csv();
    match &common.out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(table_exit_code(&table))
}

fn main() -> ExitCode {
    let help = key_help();
    let mut cmd = Cli::command().after_help(help.clone());
    for name in cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect::<Vec<_>>()
    {
        cmd = cmd.mut_subcommand(name, |s| s.after_help(help.clone()));
    }
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("burgers-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
