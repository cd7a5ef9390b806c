//! `evosts`: synthesize signals, learn dictionaries, run evolution and
//! cross-validate from the command line.
//!
//! Exit codes: 0 success, 1 config error, 2 I/O error, 3 numeric failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{ConfigOverrides, RunConfig};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "evosts",
    version,
    about = "Evolutionary sparse time-series forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic sine-mixture signal as single-column CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Learn a sparse dictionary from a signal.
    LearnDict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run all generations and write the manifest and checkpoints.
    Evolve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Score every generation against this dictionary file.
        #[arg(long)]
        dictionary: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// k-fold comparison of first- and final-generation weights.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Report CSV; the manifest goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Plot one window with checkpoint forecasts as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to forecast with; repeatable.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Window index.
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: Common) -> Result<RunConfig> {
    let file = match &common.config {
        Some(path) => ConfigOverrides::from_file(path)?,
        None => ConfigOverrides::default(),
    };
    RunConfig::resolve(file.overlay(common.overrides))
}

type Job = Box<dyn FnOnce(&RunConfig) -> Result<()> + Send>;

fn run(cli: Cli) -> Result<()> {
    let (common, job): (Common, Job) = match cli.command {
        Command::Synth { out, common } => (common, Box::new(move |c| commands::synth(c, &out))),
        Command::LearnDict { input, out, common } => (
            common,
            Box::new(move |c| commands::learn_dict(c, &input, &out).map(|_| ())),
        ),
        Command::Evolve {
            input,
            out_dir,
            dictionary,
            common,
        } => (
            common,
            Box::new(move |c| commands::evolve(c, &input, &out_dir, dictionary.as_deref())),
        ),
        Command::Evaluate { input, out, common } => (
            common,
            Box::new(move |c| commands::evaluate(c, &input, &out)),
        ),
        Command::Plot {
            input,
            out,
            checkpoints,
            window,
            common,
        } => (
            common,
            Box::new(move |c| commands::plot(c, &input, &out, &checkpoints, window)),
        ),
    };
    let cfg = resolve(common)?;
    log::debug!("resolved config: {cfg:?}");
    match cfg.threads {
        Some(n) => evosts::evolution::with_threads(n, || job(&cfg)),
        None => job(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(e: &CliError) {
    eprintln!("error: {e}");
}
