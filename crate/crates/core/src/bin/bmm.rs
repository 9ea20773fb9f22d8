use std::path::PathBuf;
use std::process::ExitCode;

use bart_bmm::config::ExperimentConfig;
use bart_bmm::experiment;
use bart_bmm::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bmm",
    about = "Mix competing simulators with sum-of-trees weight functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel chains (overrides the config).
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the observation table.
    Simulate(RunArgs),
    /// Fit each simulator's truncation model and tabulate predictions.
    FitEft(RunArgs),
    /// Run the sum-of-trees mixing sampler.
    Mix(RunArgs),
    /// Global-weight model averaging baseline.
    Bma(RunArgs),
    /// Summarize a finished run directory.
    Report {
        /// Run directory written by `mix` or `bma`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(chains) = args.chains {
        if chains == 0 {
            return Err(Error::Config("--chains must be at least 1".into()));
        }
        cfg.mix.chains = chains;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let written = match &cli.command {
        Command::Simulate(a) => experiment::cmd_simulate(&load(a)?, &a.out)?,
        Command::FitEft(a) => experiment::cmd_fit_eft(&load(a)?, &a.out)?,
        Command::Mix(a) => {
            let cfg = load(a)?;
            experiment::cmd_mix(&cfg, &a.out, cfg.mix.chains)?
        }
        Command::Bma(a) => experiment::cmd_bma(&load(a)?, &a.out)?,
        Command::Report { out } => {
            print!("{}", experiment::cmd_report(out)?);
            return Ok(());
        }
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
