//! `jamwatch` — reproducible jamming-detection experiments.
//!
//! The subcommands chain into a pipeline:
//! `simulate` (IQ corpus) -> `spectrogram` (datasets) -> `train`
//! (checkpoint) -> `eval` (error-rate sweep) / `bench` (latency CDF),
//! with `describe` to inspect a checkpoint. Every stage is deterministic
//! in the experiment seed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jamwatch_core::error::Result;
use jamwatch_core::io::CorpusLayout;
use jamwatch_core::models::ModelKind;

use config::Scale;

#[derive(Parser)]
#[command(name = "jamwatch", version, about = "Broadband jamming detection from IQ spectrograms")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

/// Options every subcommand shares.
#[derive(Args)]
struct Common {
    /// Experiment config file (TOML); presets are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model kind override: cae | cnn.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Scale override: full | desk.
    #[arg(long)]
    scale: Option<Scale>,
    /// Experiment seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override (also honors JAMWATCH_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<config::ExperimentConfig> {
        config::resolve(
            self.config.as_deref(),
            self.model,
            self.scale,
            self.seed,
            self.out.clone(),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic IQ corpus for all three splits.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// File layout: per-frame | concat.
        #[arg(long, default_value = "per-frame")]
        layout: String,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Convert the IQ corpus into neg-log spectrogram datasets.
    Spectrogram {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        force: bool,
    },
    /// Train the selected model with early stopping.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        force: bool,
    },
    /// Sweep thresholds on the test set and summarize error rates.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path (default: <out>/model.nnc).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test dataset path (default: <out>/data/test.sgd).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fixed decision threshold for the accuracy report.
        #[arg(long)]
        tau: Option<f64>,
        /// Calibrate tau = max validation score * MARGIN.
        #[arg(long, value_name = "MARGIN")]
        calibrate: Option<f64>,
        #[arg(long)]
        force: bool,
    },
    /// Time the end-to-end classification pipeline.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Read frames from this corpus directory instead of synthesizing.
        #[arg(long)]
        iq: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Synthetic frame pool size when no corpus is given.
        #[arg(long, default_value_t = 9)]
        pool: usize,
        /// Decision threshold used in the timed comparison step.
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long)]
        force: bool,
    },
    /// Print the layer table of a checkpoint.
    Describe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Command::Simulate {
            common,
            layout,
            force,
        } => {
            let cfg = common.resolve()?;
            let layout = match layout.as_str() {
                "per-frame" => CorpusLayout::PerFrame,
                "concat" => CorpusLayout::Concatenated,
                other => {
                    return Err(jamwatch_core::Error::Argument(format!(
                        "unknown layout `{other}` (use per-frame or concat)"
                    )))
                }
            };
            commands::simulate(&cfg, layout, force)
        }
        Command::Spectrogram { common, force } => {
            let cfg = common.resolve()?;
            commands::spectrogram(&cfg, force)
        }
        Command::Train { common, force } => {
            let cfg = common.resolve()?;
            commands::train_cmd(&cfg, force)
        }
        Command::Eval {
            common,
            checkpoint,
            data,
            tau,
            calibrate,
            force,
        } => {
            let cfg = common.resolve()?;
            commands::eval(
                &cfg,
                &commands::EvalOpts {
                    checkpoint,
                    data,
                    tau,
                    calibrate_margin: calibrate,
                    force,
                },
            )
        }
        Command::Bench {
            common,
            checkpoint,
            iq,
            trials,
            pool,
            tau,
            force,
        } => {
            let cfg = common.resolve()?;
            commands::bench(
                &cfg,
                &commands::BenchOpts {
                    checkpoint,
                    iq_dir: iq,
                    trials,
                    pool,
                    tau,
                    force,
                },
            )
        }
        Command::Describe { common, checkpoint } => {
            let cfg = common.resolve()?;
            commands::describe(&cfg, checkpoint)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
