//! `postdae` — mask post-processing pipeline, end to end.
//!
//! Subcommands cover the whole workflow: `generate` synthetic scenes,
//! `degrade` ground-truth masks at a chosen severity, `segment` with the
//! weak intensity classifier, `train` the denoising autoencoder,
//! `postprocess` arbitrary masks through it, refine soft predictions with
//! the dense `crf` baseline, `evaluate` prediction directories against
//! ground truth, and `report` the result table.
//!
//! Every run writes a manifest with resolved configuration and SHA-256
//! checksums of the files it read and wrote. Exit codes: 0 success,
//! 2 usage or validation failure, 3 numerical failure.

mod commands;
mod manifest;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Shape-prior post-processing for segmentation masks.
#[derive(Parser)]
#[command(name = "postdae", version, about)]
struct Cli {
    /// Override every config seed in this run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-file stages (outputs are identical at any
    /// thread count).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Directory receiving the run manifest (default: the command's
    /// output directory).
    #[arg(long, global = true)]
    manifest_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate paired image/ground-truth scenes.
    Generate(commands::generate::Args),
    /// Corrupt ground-truth masks at a named severity or custom config.
    Degrade(commands::degrade::Args),
    /// Fit the weak intensity classifier and segment scenes.
    Segment(commands::segment::Args),
    /// Train the denoising autoencoder on clean masks.
    Train(commands::train::Args),
    /// Project masks through a trained model.
    Postprocess(commands::postprocess::Args),
    /// Refine soft predictions with dense mean-field CRF.
    Crf(commands::crf::Args),
    /// Score prediction directories against ground truth.
    Evaluate(commands::evaluate::Args),
    /// Render an evaluation report as aligned text tables.
    Report(commands::report::Args),
}

/// Errors mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CmdError {
    /// Bad usage, bad config, unreadable or mismatched inputs -> exit 2.
    Validation(String),
    /// NaN losses and other numerical breakdowns -> exit 3.
    Numerical(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Validation(m) | CmdError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl CmdError {
    fn validation(e: impl std::fmt::Display) -> Self {
        CmdError::Validation(e.to_string())
    }
}

pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub threads: usize,
    pub manifest_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let globals = GlobalOpts {
        seed: cli.seed,
        threads: cli.threads.max(1),
        manifest_dir: cli.manifest_dir,
    };
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(args, &globals),
        Command::Degrade(args) => commands::degrade::run(args, &globals),
        Command::Segment(args) => commands::segment::run(args, &globals),
        Command::Train(args) => commands::train::run(args, &globals),
        Command::Postprocess(args) => commands::postprocess::run(args, &globals),
        Command::Crf(args) => commands::crf::run(args, &globals),
        Command::Evaluate(args) => commands::evaluate::run(args, &globals),
        Command::Report(args) => commands::report::run(args, &globals),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CmdError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
