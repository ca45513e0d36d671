//! `ifenn`: dataset generation, surrogate training, coupled solves, run
//! comparison and network-size sweeps.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 nonconvergence or a
//! non-finite training loss (partial outputs are written), 4 I/O failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ifenn", version, about = "Nonlocal damage FEM with a TCN surrogate for the nonlocal strain")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides the configuration's `output`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a benchmark with the FEM solver and write Datasets A, B and C.
    Generate(Common),
    /// Train a TCN on generated datasets.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the monolithic, staggered or I-FENN solver.
    Solve(Common),
    /// Compare two solve runs increment by increment.
    Compare {
        /// Run directory or history.json of the run under test.
        run: PathBuf,
        /// Run directory or history.json of the reference run.
        reference: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train a grid or random sample of network sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    NonConvergence(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Failure::Config(anyhow::anyhow!("{msg}"))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::NonConvergence(e) | Failure::Io(e) => e,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_env("IFENN_LOG").format_timestamp(None).init();
    let result = match &cli.command {
        Command::Generate(c) => commands::generate(c),
        Command::Train { common, seed } => commands::train(common, *seed),
        Command::Solve(c) => commands::solve(c),
        Command::Compare { run, reference, out } => commands::compare(run, reference, out.as_deref()),
        Command::Sweep { common, seed } => commands::sweep(common, *seed),
    };
    match result {
        Ok(dir) => {
            log::info!("outputs in {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
