//! Command-line entry points for corpus generation, training, translation,
//! evaluation and loss reporting.

mod evaluate;
mod report;
mod synth;
mod train;
mod translate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nct_core::train::Mode;

#[derive(Parser)]
#[command(name = "nct", version, about = "Context-aware chat translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic bilingual chat corpus and a matching experiment config.
    MakeSynthetic(synth::Args),
    /// Run the training stages, resuming from checkpoints in the output directory.
    Train(train::Args),
    /// Translate a dialogue corpus with a trained checkpoint.
    Translate(translate::Args),
    /// Score translations against references.
    Evaluate(evaluate::Args),
    /// Tabulate a loss log.
    Report(report::Args),
}

/// Options shared by commands that read an experiment configuration.
#[derive(clap::Args, Clone, Debug)]
pub struct ExperimentArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the context window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Override the training mode.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: nct_core::Error| e.to_string())
}

impl ExperimentArgs {
    /// The configuration with command-line overrides applied, validated.
    pub fn load(&self) -> anyhow::Result<nct_core::experiment::ExperimentConfig> {
        let mut cfg = nct_core::experiment::ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(w) = self.window {
            cfg.train.window = w;
        }
        if let Some(mode) = self.mode {
            cfg.train.mode = mode;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MakeSynthetic(a) => synth::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Translate(a) => translate::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Report(a) => report::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
