use std::path::{Path, PathBuf};

use anyhow::Context;
use nct_core::experiment::{CorpusPaths, ExperimentConfig, TokenizerConfig};
use nct_core::model::ModelConfig;
use nct_core::synthetic::{
    generate, SyntheticSpec, MONO_SOURCE_FILE, MONO_TARGET_FILE, SENTENCES_FILE, TRAIN_FILE,
};
use nct_core::train::TrainConfig;

pub const EXPERIMENT_FILE: &str = "experiment.toml";

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Generator settings (TOML); defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving the corpus files.
    #[arg(long)]
    out: PathBuf,
}

/// Experiment over the generated files with the desk-scale profile. Paths
/// are relative to the corpus directory.
pub fn experiment_for(spec: &SyntheticSpec) -> ExperimentConfig {
    ExperimentConfig {
        out: PathBuf::from("run"),
        corpus: CorpusPaths {
            sentences: SENTENCES_FILE.into(),
            dialogues: TRAIN_FILE.into(),
            mono_source: Some(MONO_SOURCE_FILE.into()),
            mono_target: Some(MONO_TARGET_FILE.into()),
        },
        tokenizer: TokenizerConfig::default(),
        model: ModelConfig::default(),
        train: TrainConfig {
            seed: spec.seed,
            ..TrainConfig::tiny()
        },
    }
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let mut spec = match &args.config {
        Some(p) => SyntheticSpec::load(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = generate(&spec)?;
    corpus.write(&args.out)?;
    write_text(&args.out.join(EXPERIMENT_FILE), &experiment_for(&spec).to_toml())?;
    log::info!(
        "wrote {} sentence records, {} training, {} test and {} development dialogues to {}",
        corpus.sentences.len(),
        corpus.train.len(),
        corpus.test.len(),
        corpus.dev.len(),
        args.out.display()
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
