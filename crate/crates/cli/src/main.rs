use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parametrix_cli::{benchmark_listing, run_file, Overrides, SEED_ENV};

/// Unbiased Monte Carlo transition densities of SDEs.
#[derive(Parser, Debug)]
#[command(name = "parametrix", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured and environment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Built-in benchmarks.
    Benchmark {
        #[command(subcommand)]
        action: BenchmarkAction,
    },
}

#[derive(Subcommand, Debug)]
enum BenchmarkAction {
    /// Lists benchmark names, models and references.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(Sub::Benchmark { action: BenchmarkAction::List }) = cli.command {
        for line in benchmark_listing() {
            println!("{line}");
        }
        return ExitCode::SUCCESS;
    }
    let Some(path) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    let over = Overrides { seed: cli.seed, workers: cli.workers, output: cli.output };
    let env_seed = std::env::var(SEED_ENV).ok();
    match run_file(&path, &over, env_seed.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
