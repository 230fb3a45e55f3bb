//! `reportsup` command-line tool.
//!
//! Machine-readable output goes to stdout, diagnostics to stderr. Exit codes:
//! 0 ok, 1 usage, 2 malformed input or I/O, 3 dims mismatch, 4 gradient check
//! failure, 5 fit divergence.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};


pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "reportsup", version, about = "Report-supervision losses over 3D probability maps")]
pub struct Cli {
    /// Loss config JSON (tau, connectivity, size_mode, size_one_sided, variant, weights).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Add human-readable summaries on stderr.
    #[arg(long, global = true)]
    pub human: bool,
    /// Suppress informational diagnostics.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that take precedence over the config file.
#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// 6 or 26.
    #[arg(long, global = true)]
    pub connectivity: Option<u32>,
    #[arg(long, global = true, value_parser = ["hard", "soft"])]
    pub variant: Option<String>,
    #[arg(long, global = true, value_parser = ["max-extent", "volume"])]
    pub size_mode: Option<String>,
    #[arg(long, global = true)]
    pub size_one_sided: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a report into CueSet JSON.
    Parse {
        report: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the report loss of probability maps against cues.
    Eval {
        #[arg(long, num_args = 3, value_names = ["ET", "ED", "TC"], required = true)]
        maps: Vec<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["DURAL", "PARENCH"], required = true)]
        masks: Vec<PathBuf>,
        #[arg(long)]
        cues: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of the soft objective.
    Gradcheck {
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        n_coords: u64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        configs: u64,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..=32))]
        dims: u64,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Fit a logit field to a cue set.
    Fit {
        #[arg(long, conflicts_with = "phantom", required_unless_present = "phantom")]
        cues: Option<PathBuf>,
        /// Index into the bundled phantom suite.
        #[arg(long)]
        phantom: Option<usize>,
        #[arg(long, num_args = 2, value_names = ["DURAL", "PARENCH"])]
        masks: Vec<PathBuf>,
        /// Edge length of the cubic fit grid when no masks are given.
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..=64))]
        dims: u64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        /// Comma-separated subset of exist, global, prior.
        #[arg(long, default_value = "exist,global,prior")]
        terms: String,
    },
    /// Generate phantoms: VGR grids, report text and a manifest index.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        /// JSON list of phantom specs; default draws random specs from --seed.
        #[arg(long, conflicts_with = "bundled")]
        manifest: Option<PathBuf>,
        /// Use the bundled 50-phantom suite.
        #[arg(long)]
        bundled: bool,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// Constraint-satisfaction ablation over a phantom suite, as CSV.
    Ablate {
        /// JSON list of phantom specs; default is the bundled suite.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Only use the first N phantoms.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub(crate) fn note(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub(crate) fn human(cli: &Cli, msg: impl AsRef<str>) {
    if cli.human {
        eprintln!("{}", msg.as_ref());
    }
}
