mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coint_forward::{Error, ErrorClass};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "coint-forward", version, about = "Cointegrated gas and crude forward-curve model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate model-driven quote panels and the parameters behind them.
    Synth(Common),
    /// Estimate parameters and the centering drift from two quote files.
    Calibrate(Common),
    /// Diffuse forward curves and summarize the scenarios.
    Simulate(Common),
    /// Run unit-root, cointegration, rank and moment-identity checks.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the configuration file.
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Io => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (name, common, cmd): (&str, Common, fn(&RunConfig) -> commands::Outcome) = match cli.command {
        Command::Synth(c) => ("synth", c, commands::synth),
        Command::Calibrate(c) => ("calibrate", c, commands::calibrate_cmd),
        Command::Simulate(c) => ("simulate", c, commands::simulate),
        Command::Validate(c) => ("validate", c, commands::validate),
    };
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .with_seed(common.seed);
    let (out, summary) = cmd(&cfg)?;
    let written = out.commit(&common.out)?;
    println!("{name} (seed {})", cfg.seed);
    for line in summary {
        println!("  {line}");
    }
    println!("  wrote {} files to {}", written.len(), common.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
