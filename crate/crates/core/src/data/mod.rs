//! Corpora, tokenisation, dialogue context and model inputs.

mod batch;
mod context;
mod corpus;
mod samples;
mod vocab;

pub use batch::{encode_pair_input, encode_source, encode_target, PairInput, SourceInput, TargetInput};
pub use context::{build_context, ContextBundle};
pub use corpus::{parse_corpus, read_corpus, write_corpus, Dialogue, DialogueKind, Lang, Speaker, Utterance};
pub use samples::{sd_samples, ud_samples, AuxTask, LabeledSample, SdOutcome};
pub use vocab::{Vocabulary, CLS, EOS, PAD, SEP, UNK};

/// One tokenised utterance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncUtt {
    pub ids: Vec<u32>,
    pub speaker: Speaker,
    pub turn: usize,
}

/// One side of a dialogue, tokenised.
#[derive(Clone, Debug, PartialEq)]
pub struct EncDialogue {
    pub id: String,
    pub lang: Lang,
    pub turns: Vec<EncUtt>,
}

impl EncDialogue {
    pub fn encode(id: &str, turns: &[Utterance], vocab: &Vocabulary) -> Self {
        EncDialogue {
            id: id.to_string(),
            lang: turns.first().map_or(Lang::Source, |u| u.lang),
            turns: turns
                .iter()
                .map(|u| EncUtt {
                    ids: vocab.encode(&u.text),
                    speaker: u.speaker,
                    turn: u.turn,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Turn `u`, 1-based.
    pub fn turn(&self, u: usize) -> crate::Result<&EncUtt> {
        if u == 0 || u > self.turns.len() {
            return Err(crate::Error::TurnOutOfRange {
                dialogue: self.id.clone(),
                turn: u,
                len: self.turns.len(),
            });
        }
        Ok(&self.turns[u - 1])
    }
}

/// A tokenised bilingual dialogue with aligned sides.
#[derive(Clone, Debug, PartialEq)]
pub struct EncPair {
    pub source: EncDialogue,
    pub target: EncDialogue,
}

impl EncPair {
    pub fn encode(d: &Dialogue, vocab: &Vocabulary) -> crate::Result<Self> {
        let target = d
            .target()
            .ok_or_else(|| crate::Error::Corpus(format!("dialogue `{}` is not bilingual", d.id)))?;
        if target.len() != d.turns.len() {
            return Err(crate::Error::Misaligned(d.id.clone()));
        }
        Ok(EncPair {
            source: EncDialogue::encode(&d.id, d.source(), vocab),
            target: EncDialogue::encode(&d.id, target, vocab),
        })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}
