use std::path::PathBuf;

use anyhow::{bail, Context};
use nct_core::data::read_corpus;
use nct_core::experiment::ExperimentConfig;
use nct_core::metrics::{evaluate, Embeddings};

use crate::translate::load_model;
use crate::train::checkpoint_path;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Translated dialogues (JSON lines).
    #[arg(long)]
    translations: PathBuf,
    /// Reference dialogues, in the same order.
    #[arg(long)]
    references: PathBuf,
    /// Word vectors, one `token v1 … vd` line each.
    #[arg(long, conflicts_with = "config")]
    embeddings: Option<PathBuf>,
    /// Experiment whose final model supplies the word vectors.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preceding translated turns compared for coherence.
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// Write the report here as well as to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn embeddings(args: &Args) -> anyhow::Result<Embeddings> {
    if let Some(p) = &args.embeddings {
        return Ok(Embeddings::read(p)?);
    }
    let Some(cfg_path) = &args.config else {
        bail!("coherence needs word vectors: pass --embeddings or --config");
    };
    let cfg = ExperimentConfig::load(cfg_path)?;
    let m3 = checkpoint_path(&cfg.out, nct_core::train::Stage::Dialogue);
    let path = if m3.exists() {
        m3
    } else {
        checkpoint_path(&cfg.out, nct_core::train::Stage::Sentence)
    };
    let (ck, vocab) = load_model(&cfg.out, &path)?;
    Ok(Embeddings::from_model(&vocab, &ck.model()?)?)
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let emb = embeddings(args)?;
    let translations = read_corpus(&args.translations)?;
    let references = read_corpus(&args.references)?;
    let report = evaluate(&translations, &references, args.window, &emb)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &args.output {
        std::fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{json}");
    Ok(())
}
