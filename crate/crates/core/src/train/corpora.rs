use rand::Rng;

use crate::data::{
    build_context, encode_source, encode_target, sd_samples, ud_samples, AuxTask, Dialogue,
    EncDialogue, EncPair, EncUtt, LabeledSample, SdOutcome, Speaker, Vocabulary,
};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

use super::losses::TranslationExample;

/// Every task that draws a batch. The discriminant keys the task's random
/// streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Sentence = 0,
    Dialogue = 1,
    UdSource = 2,
    UdTarget = 3,
    SdSource = 4,
    SdTarget = 5,
    UdMonoSource = 6,
    UdMonoTarget = 7,
    SdMonoSource = 8,
    SdMonoTarget = 9,
}

/// Tokenised training data.
#[derive(Clone, Debug, Default)]
pub struct Corpora {
    /// Sentence pairs without dialogue context.
    pub sentences: Vec<(Vec<u32>, Vec<u32>)>,
    /// Bilingual dialogues.
    pub dialogues: Vec<EncPair>,
    /// Source and target sides of the bilingual dialogues, for the
    /// auxiliary tasks.
    pub dialogue_sources: Vec<EncDialogue>,
    pub dialogue_targets: Vec<EncDialogue>,
    pub mono_source: Vec<EncDialogue>,
    pub mono_target: Vec<EncDialogue>,
}

impl Corpora {
    /// Tokenises the four corpora. Every aligned turn of a sentence-corpus
    /// record becomes one sentence pair.
    pub fn encode(
        vocab: &Vocabulary,
        sentences: &[Dialogue],
        dialogues: &[Dialogue],
        mono_source: &[Dialogue],
        mono_target: &[Dialogue],
    ) -> Result<Self> {
        let mut out = Corpora::default();
        for d in sentences {
            let pair = EncPair::encode(d, vocab)?;
            for (s, t) in pair.source.turns.iter().zip(&pair.target.turns) {
                out.sentences.push((s.ids.clone(), t.ids.clone()));
            }
        }
        for d in dialogues {
            let pair = EncPair::encode(d, vocab)?;
            out.dialogue_sources.push(pair.source.clone());
            out.dialogue_targets.push(pair.target.clone());
            out.dialogues.push(pair);
        }
        let mono = |ds: &[Dialogue]| -> Vec<EncDialogue> {
            ds.iter().map(|d| EncDialogue::encode(&d.id, d.source(), vocab)).collect()
        };
        out.mono_source = mono(mono_source);
        out.mono_target = mono(mono_target);
        Ok(out)
    }

    /// Dialogue corpus feeding an auxiliary task.
    pub fn aux_corpus(&self, task: Task) -> &[EncDialogue] {
        match task {
            Task::UdSource | Task::SdSource => &self.dialogue_sources,
            Task::UdTarget | Task::SdTarget => &self.dialogue_targets,
            Task::UdMonoSource | Task::SdMonoSource => &self.mono_source,
            Task::UdMonoTarget | Task::SdMonoTarget => &self.mono_target,
            Task::Sentence | Task::Dialogue => &[],
        }
    }

    pub(crate) fn require(&self, task: Task) -> Result<()> {
        let (empty, name) = match task {
            Task::Sentence => (self.sentences.is_empty(), "sentence pairs"),
            Task::Dialogue => (self.dialogues.is_empty(), "bilingual dialogues"),
            Task::UdSource | Task::SdSource | Task::UdTarget | Task::SdTarget => {
                (self.dialogues.is_empty(), "bilingual dialogues")
            }
            Task::UdMonoSource | Task::SdMonoSource => {
                (self.mono_source.is_empty(), "source monolingual dialogues")
            }
            Task::UdMonoTarget | Task::SdMonoTarget => {
                (self.mono_target.is_empty(), "target monolingual dialogues")
            }
        };
        if empty {
            Err(Error::MissingCorpus(name))
        } else {
            Ok(())
        }
    }

    /// Random sentence pairs until their target tokens reach `budget`.
    pub fn sample_sentences<R: Rng>(
        &self,
        budget: usize,
        model: &ModelConfig,
        rng: &mut R,
    ) -> Result<Vec<TranslationExample>> {
        self.require(Task::Sentence)?;
        let mut out = Vec::new();
        let mut tokens = 0;
        while tokens < budget {
            let (src, tgt) = &self.sentences[rng.gen_range(0..self.sentences.len())];
            let current = EncUtt {
                ids: src.clone(),
                speaker: Speaker::S1,
                turn: 1,
            };
            let ex = TranslationExample {
                source: encode_source(&[], &current, model.max_len, model.max_turns)?,
                target: encode_target(tgt, model.max_len),
            };
            tokens += ex.target.len();
            out.push(ex);
        }
        Ok(out)
    }

    /// Random dialogue turns with their context until the target tokens
    /// reach `budget`.
    pub fn sample_turns<R: Rng>(
        &self,
        budget: usize,
        window: usize,
        with_target_context: bool,
        model: &ModelConfig,
        rng: &mut R,
    ) -> Result<Vec<TranslationExample>> {
        self.require(Task::Dialogue)?;
        let mut out = Vec::new();
        let mut tokens = 0;
        while tokens < budget {
            let pair = &self.dialogues[rng.gen_range(0..self.dialogues.len())];
            let u = rng.gen_range(1..=pair.len());
            let ex = dialogue_example(pair, u, window, with_target_context, model)?;
            tokens += ex.target.len();
            out.push(ex);
        }
        Ok(out)
    }

    /// `n` labelled samples for an auxiliary task: utterance
    /// discrimination draws one positive with its negatives per turn,
    /// speaker discrimination a positive/negative pair per turn.
    pub fn sample_aux<R: Rng>(
        &self,
        task: Task,
        n: usize,
        window: usize,
        negatives: usize,
        rng: &mut R,
    ) -> Result<Vec<LabeledSample>> {
        self.require(task)?;
        let corpus = self.aux_corpus(task);
        let kind = match task {
            Task::UdSource | Task::UdTarget | Task::UdMonoSource | Task::UdMonoTarget => AuxTask::Utterance,
            _ => AuxTask::Speaker,
        };
        let min_turns = if kind == AuxTask::Utterance { 2 } else { 3 };
        let eligible: Vec<usize> = (0..corpus.len()).filter(|&d| corpus[d].len() >= min_turns).collect();
        if eligible.is_empty() {
            return Err(Error::Corpus(format!(
                "no dialogue has the {min_turns} turns {task:?} needs"
            )));
        }
        let mut out = Vec::with_capacity(n + negatives);
        while out.len() < n {
            let d = eligible[rng.gen_range(0..eligible.len())];
            let u = rng.gen_range(min_turns..=corpus[d].len());
            match kind {
                AuxTask::Utterance => out.extend(ud_samples(corpus, d, u, window, negatives, rng)?),
                AuxTask::Speaker => {
                    if let SdOutcome::Samples(pair) = sd_samples(corpus, d, u, window)? {
                        out.extend(pair);
                    } else {
                        return Err(Error::Config(format!(
                            "window {window} is too short for speaker discrimination"
                        )));
                    }
                }
            }
        }
        out.truncate(n);
        Ok(out)
    }
}

/// The translation example for turn `u` of a bilingual dialogue. Target
/// history, when requested, is the gold translation of the preceding turns.
pub fn dialogue_example(
    pair: &EncPair,
    u: usize,
    window: usize,
    with_target_context: bool,
    model: &ModelConfig,
) -> Result<TranslationExample> {
    let history = if with_target_context {
        target_context(&pair.target.turns, u, window)?
    } else {
        &[]
    };
    let source = source_with_history(&pair.source, history, u, window, model)?;
    Ok(TranslationExample {
        source,
        target: encode_target(&pair.target.turn(u)?.ids, model.max_len),
    })
}

/// Encoder input for turn `u`: optional target history, then the source
/// context window, then the utterance itself.
pub(crate) fn source_with_history(
    source: &EncDialogue,
    history: &[EncUtt],
    u: usize,
    window: usize,
    model: &ModelConfig,
) -> Result<crate::data::SourceInput> {
    let ctx = build_context(source, u, window)?;
    let mut refs: Vec<&EncUtt> = history.iter().collect();
    refs.extend(ctx.full.iter().map(|&t| &source.turns[t - 1]));
    encode_source(&refs, &source.turns[u - 1], model.max_len, model.max_turns)
}

/// Target-side history `y_<u`, windowed: the last `min(window, u - 1)`
/// entries of `history[..u - 1]`. In training `history` holds the gold
/// translations; at inference it holds the turns generated so far.
pub fn target_context(history: &[EncUtt], u: usize, window: usize) -> Result<&[EncUtt]> {
    if u == 0 {
        return Err(Error::Invalid("turns are numbered from 1".into()));
    }
    if history.len() < u - 1 {
        return Err(Error::Misaligned(format!(
            "target history has {} turns, turn {u} needs {}",
            history.len(),
            u - 1
        )));
    }
    let end = u - 1;
    Ok(&history[end.saturating_sub(window)..end])
}
