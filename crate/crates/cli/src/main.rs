use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mimo_coord::coord::AlgorithmId;
use mimo_coord::experiment::{emit_csv, parse_experiment, run_experiment, summarize};

#[derive(Parser)]
#[command(name = "mimo-coord", version, about = "Monte-Carlo benchmarks for MIMO transceiver coordination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write one CSV row per (algo, T, SNR, realization).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; defaults to the config's `run.output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated algorithm ids, e.g. MAX_DLT,AIMS.
        #[arg(long, value_delimiter = ',')]
        algo: Option<Vec<AlgorithmId>>,
        /// Comma-separated iteration counts.
        #[arg(long, value_delimiter = ',')]
        iters: Option<Vec<usize>>,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        out,
        seed,
        workers,
        algo,
        iters,
    } = Cli::parse().command;

    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    let mut spec = match parse_experiment(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = seed {
        spec.run.seed = seed;
    }
    if let Some(algos) = algo {
        spec.run.algos = algos;
    }
    if let Some(iters) = iters {
        spec.run.iterations = iters;
    }
    if let Err(e) = spec.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let out = out.unwrap_or_else(|| PathBuf::from(&spec.run.output));

    let outcome = match run_experiment(&spec, workers) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for f in &outcome.failures {
        eprintln!(
            "row failed: {} snr={} realization={}: {}",
            f.algo, f.snr_db, f.realization, f.message
        );
    }
    if !outcome.rows.is_empty() {
        if let Err(e) = emit_csv(&outcome.rows, &out) {
            eprintln!("error: writing {}: {e}", out.display());
            return ExitCode::from(2);
        }
        print!("{}", summarize(&outcome.rows));
        println!("wrote {} rows to {}", outcome.rows.len(), out.display());
    }
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} realization(s) failed", outcome.failures.len());
        ExitCode::from(2)
    }
}
