use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use nct_core::data::Vocabulary;
use nct_core::experiment::Data;
use nct_core::train::{Checkpoint, LossReport, Observer, Stage, Trainer};

use crate::ExperimentArgs;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const LOSS_LOG: &str = "losses.jsonl";

pub fn checkpoint_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(format!("{}.ckpt", stage.tag()))
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Stop any stage once it has completed this many steps in total,
    /// leaving a resumable checkpoint.
    #[arg(long)]
    halt_after: Option<u64>,
}

/// Appends loss reports to the log and writes stage checkpoints.
struct RunFiles {
    dir: PathBuf,
    log: BufWriter<File>,
}

impl Observer for RunFiles {
    fn report(&mut self, report: &LossReport) -> nct_core::Result<()> {
        serde_json::to_writer(&mut self.log, report)?;
        self.log.write_all(b"\n")?;
        Ok(())
    }

    fn checkpoint(&mut self, checkpoint: &Checkpoint) -> nct_core::Result<()> {
        self.log.flush()?;
        checkpoint.save(&checkpoint_path(&self.dir, checkpoint.stage))
    }
}

/// Drops log records at or after `(stage, step)` so that a resumed run
/// appends exactly the records the interrupted run lost.
fn truncate_log(path: &Path, stage: Stage, step: u64) -> anyhow::Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut kept = String::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: LossReport = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed loss record", path.display(), i + 1))?;
        if r.stage < stage.number() || (r.stage == stage.number() && r.step < step) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    fs::write(path, kept).with_context(|| format!("rewriting {}", path.display()))
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let cfg = args.experiment.load()?;
    let dir = &cfg.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let vocab_path = dir.join(VOCAB_FILE);
    let vocab = if vocab_path.exists() {
        Some(Vocabulary::load(&vocab_path)?)
    } else {
        None
    };
    let data = Data::load(&cfg, vocab)?;
    if !vocab_path.exists() {
        data.vocab.save(&vocab_path)?;
    }
    log::info!("vocabulary of {} tokens", data.vocab.len());

    let mut trainer = Trainer::new(cfg.train.clone(), cfg.model.clone(), &data.vocab, &data.corpora)?;
    if let Some(h) = args.halt_after {
        trainer = trainer.halt_after(h);
    }

    let log_path = dir.join(LOSS_LOG);
    let mut previous: Option<Checkpoint> = None;
    // Once a stage runs, checkpoints of later stages on disk are stale.
    let mut ran = false;
    for stage in cfg.train.stages() {
        let path = checkpoint_path(dir, stage);
        let existing = if !ran && path.exists() {
            Some(Checkpoint::load(&path)?)
        } else {
            None
        };
        if let Some(c) = existing.as_ref().filter(|c| c.is_complete()) {
            log::info!("{} already complete", stage.tag());
            previous = Some(trainer.run_stage(stage, Some(c), &mut nct_core::train::Collect::default())?);
            continue;
        }
        let start = existing.as_ref().map_or(0, |c| c.step);
        truncate_log(&log_path, stage, start)?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .with_context(|| format!("opening {}", log_path.display()))?;
        let mut files = RunFiles {
            dir: dir.clone(),
            log: BufWriter::new(log),
        };
        let input = existing.as_ref().or(previous.as_ref());
        if start > 0 {
            log::info!("resuming {} at step {start}", stage.tag());
        } else {
            log::info!("running stage {}", stage.number());
        }
        let out = trainer.run_stage(stage, input, &mut files)?;
        files.log.flush()?;
        ran = true;
        if !out.is_complete() {
            log::info!(
                "halted {} at step {} of {}; run again to resume",
                stage.tag(),
                out.step,
                cfg.train.stage(stage).steps
            );
            return Ok(());
        }
        log::info!("wrote {}", path.display());
        previous = Some(out);
    }
    Ok(())
}
