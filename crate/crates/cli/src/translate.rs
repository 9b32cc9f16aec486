use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nct_core::data::{read_corpus, write_corpus, Vocabulary};
use nct_core::infer::{translate_corpus, Search};
use nct_core::train::{Checkpoint, Stage};
use nct_core::Error;

use crate::train::{checkpoint_path, VOCAB_FILE};
use crate::ExperimentArgs;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Dialogues to translate (JSON lines).
    #[arg(long)]
    input: PathBuf,
    /// Translated dialogues, same record format with generated targets.
    #[arg(long)]
    output: PathBuf,
    /// Also write one translated utterance per line to this file.
    #[arg(long)]
    text: Option<PathBuf>,
    /// Checkpoint to use instead of the run's final one.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Beam width; 1 decodes greedily.
    #[arg(long, default_value_t = 4)]
    beam: usize,
}

/// M3 of the run, or M1 when there is no M3.
fn default_checkpoint(dir: &Path) -> anyhow::Result<PathBuf> {
    let m3 = checkpoint_path(dir, Stage::Dialogue);
    if m3.exists() {
        return Ok(m3);
    }
    let m1 = checkpoint_path(dir, Stage::Sentence);
    if m1.exists() {
        return Ok(m1);
    }
    bail!("no M3 or M1 checkpoint in {}", dir.display())
}

/// Loads a checkpoint fit for translation and the vocabulary it was
/// trained with.
pub fn load_model(dir: &Path, path: &Path) -> anyhow::Result<(Checkpoint, Vocabulary)> {
    let ck = Checkpoint::load(path)?;
    match ck.stage {
        Stage::Dialogue => {}
        Stage::Sentence => log::warn!("{} is a sentence-level model; context is not trained", path.display()),
        _ => bail!("{} holds {}; translation needs M3 or M1", path.display(), ck.tag()),
    }
    if !ck.is_complete() {
        log::warn!("{} stopped at step {} of {}", path.display(), ck.step, ck.meta.stage_steps);
    }
    let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
    if vocab.fingerprint() != ck.meta.vocab_fingerprint || vocab.len() != ck.meta.vocab_size {
        return Err(Error::VocabMismatch(format!(
            "{} was trained with a different vocabulary than {}",
            path.display(),
            dir.join(VOCAB_FILE).display()
        ))
        .into());
    }
    Ok((ck, vocab))
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let cfg = args.experiment.load()?;
    if args.beam == 0 {
        bail!("--beam must be at least 1");
    }
    let path = match &args.checkpoint {
        Some(p) => p.clone(),
        None => default_checkpoint(&cfg.out)?,
    };
    let (ck, vocab) = load_model(&cfg.out, &path)?;
    let model = ck.model()?;
    let dialogues = read_corpus(&args.input)?;
    let out = translate_corpus(
        &model,
        &vocab,
        &dialogues,
        cfg.train.window,
        cfg.train.target_context,
        &Search::beam(args.beam),
    )?;
    write_corpus(&args.output, &out)?;
    if let Some(text) = &args.text {
        let mut lines = String::new();
        for d in &out {
            for u in d.target().unwrap_or_default() {
                lines.push_str(&u.text);
                lines.push('\n');
            }
        }
        fs::write(text, lines).with_context(|| format!("writing {}", text.display()))?;
    }
    log::info!("translated {} dialogues with {}", out.len(), path.display());
    Ok(())
}
