use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hidden_events::commands::{self, Command, RunArgs};

/// Estimate hidden event counts with time-changed observation-delay models.
#[derive(Parser, Debug)]
#[command(name = "hidden-events", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: `out/` next to the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Simulate one of the built-in scenarios.
    Simulate,
    /// Fit the exposure regression at the computation date.
    Fit,
    /// Hazard table and proposed delay bins.
    Bins,
    /// Fit, then predict the hidden events at an evaluation date.
    Predict,
    /// Rolling percentage errors of one or more methods.
    Backtest,
    /// Aggregate chain-ladder estimate.
    Chainladder,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config <PATH> is required");
        return ExitCode::from(2);
    };
    let cmd = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::Fit => Command::Fit,
        Sub::Bins => Command::Bins,
        Sub::Predict => Command::Predict,
        Sub::Backtest => Command::Backtest,
        Sub::Chainladder => Command::ChainLadder,
    };
    let args = RunArgs {
        config,
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
    };
    let result = commands::run(cmd, &args).and_then(|o| {
        for n in &o.notes {
            eprintln!("{n}");
        }
        for p in &o.written {
            eprintln!("wrote {}", p.display());
        }
        o.status
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
