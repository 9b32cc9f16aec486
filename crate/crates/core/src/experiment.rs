//! Experiment configuration files and the pieces shared by end-to-end runs.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    encode_pair_input, read_corpus, sd_samples, ud_samples, AuxTask, Dialogue, EncDialogue, LabeledSample,
    SdOutcome, Vocabulary,
};
use crate::error::{Error, Result};
use crate::model::{FlatNct, Head, ModelConfig, Pass};
use crate::params::Bound;
use crate::rng::stream;
use crate::tensor::Graph;
use crate::train::{Corpora, Mode, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    /// Context-free sentence pairs (bilingual records).
    pub sentences: PathBuf,
    /// Bilingual training dialogues.
    pub dialogues: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mono_source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mono_target: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    pub merges: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { merges: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory receiving the vocabulary, checkpoints and loss log.
    pub out: PathBuf,
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses TOML. Relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        resolve(base, &mut cfg.out);
        let c = &mut cfg.corpus;
        resolve(base, &mut c.sentences);
        resolve(base, &mut c.dialogues);
        for p in [&mut c.mono_source, &mut c.mono_target].into_iter().flatten() {
            resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let c = &self.corpus;
        let mut missing: Vec<String> = [Some(&c.sentences), Some(&c.dialogues), c.mono_source.as_ref(), c.mono_target.as_ref()]
            .into_iter()
            .flatten()
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if self.train.mode == Mode::Mmt {
            for (name, p) in [("mono_source", &c.mono_source), ("mono_target", &c.mono_target)] {
                if p.is_none() {
                    missing.push(format!("corpus.{name} (required by mode mmt)"));
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("missing corpus files: {}", missing.join(", "))))
        }
    }
}

/// Tokenised corpora with their vocabulary.
pub struct Data {
    pub vocab: Vocabulary,
    pub corpora: Corpora,
}

fn all_texts<'a>(sets: &[&'a [Dialogue]]) -> impl Iterator<Item = &'a str> + 'a {
    sets.to_vec()
        .into_iter()
        .flatten()
        .flat_map(|d| d.turns.iter().chain(d.aligned_turns.iter().flatten()))
        .map(|u| u.text.as_str())
}

impl Data {
    /// Trains the tokenizer on every text and encodes the corpora.
    pub fn from_dialogues(
        sentences: &[Dialogue],
        dialogues: &[Dialogue],
        mono_source: &[Dialogue],
        mono_target: &[Dialogue],
        merges: usize,
    ) -> Result<Self> {
        let vocab = Vocabulary::train(all_texts(&[sentences, dialogues, mono_source, mono_target]), merges);
        let corpora = Corpora::encode(&vocab, sentences, dialogues, mono_source, mono_target)?;
        Ok(Data { vocab, corpora })
    }

    /// Encodes with an existing vocabulary.
    pub fn with_vocab(
        vocab: Vocabulary,
        sentences: &[Dialogue],
        dialogues: &[Dialogue],
        mono_source: &[Dialogue],
        mono_target: &[Dialogue],
    ) -> Result<Self> {
        let corpora = Corpora::encode(&vocab, sentences, dialogues, mono_source, mono_target)?;
        Ok(Data { vocab, corpora })
    }

    /// Reads the configured corpora. An existing vocabulary is reused so
    /// that resumed runs tokenise identically.
    pub fn load(cfg: &ExperimentConfig, vocab: Option<Vocabulary>) -> Result<Self> {
        let c = &cfg.corpus;
        let read_opt = |p: &Option<PathBuf>| p.as_deref().map_or(Ok(Vec::new()), read_corpus);
        let sentences = read_corpus(&c.sentences)?;
        let dialogues = read_corpus(&c.dialogues)?;
        let mono_source = read_opt(&c.mono_source)?;
        let mono_target = read_opt(&c.mono_target)?;
        match vocab {
            Some(v) => Self::with_vocab(v, &sentences, &dialogues, &mono_source, &mono_target),
            None => Self::from_dialogues(&sentences, &dialogues, &mono_source, &mono_target, cfg.tokenizer.merges),
        }
    }
}

/// Every utterance-discrimination or speaker-discrimination sample a
/// held-out corpus yields, one turn at a time.
pub fn heldout_samples(
    corpus: &[EncDialogue],
    task: AuxTask,
    window: usize,
    negatives: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    let mut rng = stream(seed, &[task as u64]);
    let mut out = Vec::new();
    for d in 0..corpus.len() {
        match task {
            AuxTask::Utterance => {
                for u in 2..=corpus[d].len() {
                    out.extend(ud_samples(corpus, d, u, window, negatives, &mut rng)?);
                }
            }
            AuxTask::Speaker => {
                for u in 3..=corpus[d].len() {
                    if let SdOutcome::Samples(pair) = sd_samples(corpus, d, u, window)? {
                        out.extend(pair);
                    }
                }
            }
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Share of samples whose predicted probability falls on the side of 0.5
/// given by the label.
pub fn head_accuracy(model: &FlatNct, head: Head, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut right = 0;
    for chunk in samples.chunks(32) {
        let mut g = Graph::new();
        let b = Bound::frozen(&mut g, model.params());
        let pairs: Vec<_> = chunk
            .iter()
            .map(|s| encode_pair_input(&s.context, &s.candidate, model.config().max_len))
            .collect();
        let probs = model.pair_probabilities(&mut g, &b, head, &pairs, &mut Pass::eval())?;
        right += g
            .value(probs)
            .data()
            .iter()
            .zip(chunk)
            .filter(|(&p, s)| (p > 0.5) == s.label)
            .count();
    }
    Ok(right as f64 / samples.len() as f64)
}
