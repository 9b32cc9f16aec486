//! Corpus BLEU, TER and dialogue coherence.

mod bleu;
mod coherence;
mod ter;

use serde::{Deserialize, Serialize};

use crate::data::Dialogue;
use crate::error::{Error, Result};

pub use bleu::{corpus_bleu, corpus_stats, BleuStats, MAX_ORDER};
pub use coherence::{cosine, dialogue_coherence, Coherence, CoherenceStats, Embeddings};
pub use ter::{all_shifts, edit_distance, shift, ter, ter_edits};

/// Additive per-dialogue statistics behind a [`MetricReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueMetrics {
    pub id: String,
    pub bleu: BleuStats,
    pub ter_edits: usize,
    pub reference_words: usize,
    pub coherence: CoherenceStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Corpus BLEU in [0, 100].
    pub bleu: f64,
    /// Total edits over total reference words.
    pub ter: f64,
    pub coherence: Coherence,
    pub dialogues: Vec<DialogueMetrics>,
}

impl MetricReport {
    /// Aggregates per-dialogue statistics.
    pub fn from_dialogues(dialogues: Vec<DialogueMetrics>) -> Self {
        let mut bleu = BleuStats::default();
        let mut coh = CoherenceStats::default();
        let (mut edits, mut words) = (0usize, 0usize);
        for d in &dialogues {
            bleu.add(&d.bleu);
            coh.add(&d.coherence);
            edits += d.ter_edits;
            words += d.reference_words;
        }
        MetricReport {
            bleu: bleu.score(),
            ter: if words == 0 { 0.0 } else { edits as f64 / words as f64 },
            coherence: coh.mean(),
            dialogues,
        }
    }
}

fn target_texts(d: &Dialogue) -> Result<Vec<&str>> {
    d.target()
        .map(|t| t.iter().map(|u| u.text.as_str()).collect())
        .ok_or_else(|| Error::RecordMismatch {
            id: d.id.clone(),
            reason: "record has no target side".into(),
        })
}

/// Scores translated dialogues against references. Records must pair up
/// by position, id and turn count. Coherence compares each translated turn
/// with the translated turns before it.
pub fn evaluate(
    translations: &[Dialogue],
    references: &[Dialogue],
    window: usize,
    embeddings: &Embeddings,
) -> Result<MetricReport> {
    let mut out = Vec::with_capacity(references.len());
    for i in 0..translations.len().max(references.len()) {
        let (hyp, reference) = match (translations.get(i), references.get(i)) {
            (Some(h), Some(r)) => (h, r),
            (Some(h), None) => {
                return Err(Error::RecordMismatch {
                    id: h.id.clone(),
                    reason: "translation has no matching reference".into(),
                })
            }
            (None, Some(r)) => {
                return Err(Error::RecordMismatch {
                    id: r.id.clone(),
                    reason: "reference has no matching translation".into(),
                })
            }
            (None, None) => unreachable!(),
        };
        if hyp.id != reference.id {
            return Err(Error::RecordMismatch {
                id: hyp.id.clone(),
                reason: format!("expected reference `{}` at position {}", reference.id, i + 1),
            });
        }
        let h = target_texts(hyp)?;
        let r = target_texts(reference)?;
        if h.len() != r.len() {
            return Err(Error::RecordMismatch {
                id: hyp.id.clone(),
                reason: format!("{} translated turns for {} reference turns", h.len(), r.len()),
            });
        }
        let bleu = corpus_stats(&h, &r).map_err(|e| Error::RecordMismatch {
            id: hyp.id.clone(),
            reason: e.to_string(),
        })?;
        let mut ter_edits = 0;
        let mut reference_words = 0;
        for (c, x) in h.iter().zip(&r) {
            let c: Vec<&str> = c.split_whitespace().collect();
            let x: Vec<&str> = x.split_whitespace().collect();
            ter_edits += ter::ter_edits(&c, &x);
            reference_words += x.len();
        }
        out.push(DialogueMetrics {
            id: hyp.id.clone(),
            bleu,
            ter_edits,
            reference_words,
            coherence: dialogue_coherence(&h, window, embeddings),
        });
    }
    Ok(MetricReport::from_dialogues(out))
}
