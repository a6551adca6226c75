//! `nilm`: prepare REFIT data, train, disaggregate, evaluate and report.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or validation failure,
//! 3 training diverged.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "nilm", version, about = "CNN-LSTM energy disaggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for model init, shuffling and synthesis (overrides `seed`)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic household in REFIT layout
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Split, normalize and window the configured appliances
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per appliance
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        appliance: Option<String>,
    },
    /// Predict appliance power from mains with a trained checkpoint
    Disaggregate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        appliance: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `unix_seconds,watts` or REFIT CSV; defaults to the prepared test mains
        #[arg(long)]
        mains: Option<PathBuf>,
    },
    /// Compute ANE, RMSE, accuracy and F1
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        appliance: Option<String>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Aggregate precomputed per-appliance metrics (JSON list) instead
        #[arg(long, conflicts_with_all = ["truth", "pred", "appliance"])]
        metrics: Option<PathBuf>,
    },
    /// Export truth and prediction series for plotting
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Prepare { common }
            | Command::Train { common, .. }
            | Command::Disaggregate { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    let c = cmd.common();
    let cfg = RunConfig::load(&c.config)?.finish(c.seed, c.out.clone())?;
    let show = |paths: &[PathBuf]| {
        for p in paths {
            println!("{}", p.display());
        }
    };
    match &cmd {
        Command::Synth { .. } => show(&[commands::synth(&cfg)?]),
        Command::Prepare { .. } => show(&[commands::prepare(&cfg)?]),
        Command::Train { appliance, .. } => show(&commands::train(&cfg, appliance.as_deref())?),
        Command::Disaggregate { appliance, checkpoint, mains, .. } => show(&commands::disaggregate(
            &cfg,
            appliance.as_deref(),
            checkpoint.as_deref(),
            mains.as_deref(),
        )?),
        Command::Evaluate { appliance, truth, pred, metrics, .. } => show(&[commands::evaluate(
            &cfg,
            appliance.as_deref(),
            truth.as_deref(),
            pred.as_deref(),
            metrics.as_deref(),
        )?]),
        Command::Report { run_dir, .. } => show(&commands::report(&cfg, run_dir.as_deref())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e.chain().any(|c| matches!(c.downcast_ref::<nilm::Error>(), Some(nilm::Error::Diverged { .. })));
            ExitCode::from(if diverged { 3 } else { 2 })
        }
    }
}
