//! `costate`: dataset generation, training, closed-loop simulation, the
//! collocation baseline, trajectory comparison and figure reproduction.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{BaselineArgs, CompareArgs, Context, GenDataArgs, ReproduceArgs, SimulateArgs, TrainArgs};
use crate::config::ConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "costate", version, about = "Co-state neural network optimal control pipeline")]
struct Cli {
    /// TOML file whose values override the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for default output paths.
    #[arg(long, global = true, env = "COSTATE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve boundary-value problems over a grid of initial states.
    GenData(GenDataArgs),
    /// Train a co-state network on a dataset.
    Train(TrainArgs),
    /// Run the network-based controller in closed loop.
    Simulate(SimulateArgs),
    /// Solve the open-loop problem by trapezoidal collocation.
    Baseline(BaselineArgs),
    /// Compare two result CSV files.
    Compare(CompareArgs),
    /// Regenerate the figure data and plots.
    Reproduce(ReproduceArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let mut ctx = Context {
        out_dir: cli.out_dir,
        quiet: cli.quiet,
    };
    if let Some(cfg) = &config {
        if let Some(dir) = cfg.out_dir()? {
            ctx.out_dir = dir;
        }
        if let Some(q) = cfg.quiet()? {
            ctx.quiet = q;
        }
    }
    macro_rules! merged {
        ($args:expr, $name:literal) => {
            match &config {
                Some(cfg) => cfg.apply(&$args, $name)?,
                None => $args,
            }
        };
    }
    match cli.command {
        Command::GenData(a) => commands::gen_data(&ctx, merged!(a, "gen-data")),
        Command::Train(a) => commands::train(&ctx, merged!(a, "train")),
        Command::Simulate(a) => commands::simulate(&ctx, merged!(a, "simulate")),
        Command::Baseline(a) => commands::baseline(&ctx, merged!(a, "baseline")),
        Command::Compare(a) => commands::compare(&ctx, merged!(a, "compare")),
        Command::Reproduce(a) => commands::reproduce(&ctx, merged!(a, "reproduce")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
