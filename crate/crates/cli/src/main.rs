//! `spad`: synthesize toy data, train the self-paced autoencoder, score a
//! test set and compare runs.

mod config;
mod error;
mod evaluate;
mod provenance;
mod report;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "spad", version, about = "Unsupervised morphing attack detection with a self-paced autoencoder")]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data synthesis, mixing, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log more (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render bona fide images and blended attacks with manifests.
    Synth(synth::SynthArgs),
    /// Train on an unlabeled manifest, optionally contaminated.
    Train(train::TrainArgs),
    /// Score a labeled test manifest and write metrics.
    Eval(evaluate::EvalArgs),
    /// Tabulate one or more evaluation reports.
    Report(report::ReportArgs),
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    cfg.apply_seed(cli.seed);
    match &cli.command {
        Command::Synth(a) => synth::run(&mut cfg, a),
        Command::Train(a) => train::run(&mut cfg, a),
        Command::Eval(a) => evaluate::run(&mut cfg, a),
        Command::Report(a) => report::run(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
