//! `feddecomp` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use feddecomp::runner::{
    format_best, format_partition_stats, inspect_partition, run, run_suite, ExperimentConfig, Suite,
};
use feddecomp::Error;

/// Federated training with shared full-rank and personalized low-rank weights.
///
/// Exit codes: 0 success, 2 config, 3 data, 4 numeric, 5 i/o.
#[derive(Parser)]
#[command(name = "feddecomp", version)]
struct Cli {
    /// Worker threads for clients and suite cells (default: all cores).
    #[arg(long, global = true, env = "FEDDECOMP_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; the last stdout line is the best mean accuracy.
    Run {
        /// `key = value` config file.
        config: PathBuf,
    },
    /// Run an ablation grid over three seeds and write a merged CSV.
    Suite {
        /// elora-sweep | rank-grid | alternating | reverse | partial
        name: Suite,
        /// Directory for per-run reports and the merged CSV.
        #[arg(long)]
        out: PathBuf,
        /// Root seed; cells use seed, seed+1, seed+2.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base config for every cell (default: built-in defaults).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print per-client class histograms for a config's partition.
    InspectPartition {
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> feddecomp::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::parse_file(&config)?;
            let outcome = run(&cfg)?;
            println!("report: {}", outcome.report_csv.display());
            println!("report: {}", outcome.report_json.display());
            println!("partition: {}", outcome.partition_json.display());
            println!("{}", format_best(outcome.report.best_mean_accuracy));
        }
        Command::Suite {
            name,
            out,
            seed,
            config,
        } => {
            let base = match config {
                Some(path) => ExperimentConfig::parse_file(&path)?,
                None => ExperimentConfig::default(),
            };
            let outcome = run_suite(name, &base, &out, seed)?;
            for row in &outcome.rows {
                println!("{}  seed {}  best {}", row.cell, row.seed, format_best(row.best));
            }
            for (seed, winner) in &outcome.winners {
                println!("seed {seed}: {winner} wins");
            }
            println!("merged: {}", outcome.merged_csv.display());
        }
        Command::InspectPartition { config } => {
            let cfg = ExperimentConfig::parse_file(&config)?;
            print!("{}", format_partition_stats(&inspect_partition(&cfg)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers.filter(|&n| n > 0) {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> ExitCode {
    let category = e.category();
    eprintln!("error [{}]: {e}", category.as_str());
    ExitCode::from(category.exit_code() as u8)
}
