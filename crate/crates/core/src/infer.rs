//! Beam-search decoding of single utterances and whole dialogues.

use crate::data::{Dialogue, EncDialogue, EncUtt, SourceInput, Utterance, Vocabulary, CLS, EOS, PAD, SEP, UNK};
use crate::error::{Error, Result};
use crate::model::{FlatNct, Pass, Segments};
use crate::params::Bound;
use crate::tensor::{Graph, Var};
use crate::train::{source_with_history, target_context};

/// Decoding settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Search {
    pub beam: usize,
    /// Cap on generated tokens before `<eos>`. Defaults to twice the
    /// current utterance length plus 8.
    pub max_len: Option<usize>,
}

impl Search {
    pub fn beam(beam: usize) -> Self {
        Search { beam, max_len: None }
    }

    pub fn greedy() -> Self {
        Search::beam(1)
    }

    fn limit(&self, model: &FlatNct, source: &SourceInput) -> usize {
        let default = 2 * source.current_len().saturating_sub(2) + 8;
        // The decoder input holds the start token plus every generated token.
        self.max_len.unwrap_or(default).min(model.config().max_len - 1)
    }
}

/// A finished hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens without the closing `<eos>`.
    pub tokens: Vec<u32>,
    /// Sum of token log-probabilities, `<eos>` included.
    pub log_prob: f64,
}

/// Encoder output of one source, reused across decoding steps.
struct Session<'m> {
    model: &'m FlatNct,
    graph: Graph,
    bound: Bound,
    memory: Var,
    memory_rows: usize,
    mark: usize,
}

impl<'m> Session<'m> {
    fn new(model: &'m FlatNct, source: &SourceInput) -> Result<Self> {
        let mut graph = Graph::new();
        let bound = Bound::frozen(&mut graph, model.params());
        let (memory, segs) = model.encode_flat(&mut graph, &bound, std::slice::from_ref(source), &mut Pass::eval())?;
        let mark = graph.len();
        Ok(Session {
            model,
            graph,
            bound,
            memory,
            memory_rows: segs.lens[0],
            mark,
        })
    }

    /// Next-token log-probabilities after each prefix (each starting with
    /// `<eos>`).
    fn next_log_probs(&mut self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>> {
        let g = &mut self.graph;
        let segs = Segments {
            starts: vec![0; prefixes.len()],
            lens: vec![self.memory_rows; prefixes.len()],
        };
        let states = self
            .model
            .decode_states(g, &self.bound, prefixes, self.memory, &segs, &mut Pass::eval())?;
        let mut at = 0;
        let mut lasts = Vec::with_capacity(prefixes.len());
        for p in prefixes {
            at += p.len();
            lasts.push(g.slice_rows(states, at - 1, 1));
        }
        let rows = if lasts.len() == 1 { lasts[0] } else { g.concat_rows(&lasts) };
        let logits = self.model.project(g, &self.bound, rows);
        let probs = g.masked_softmax(logits, None)?;
        let v = self.model.vocab_size();
        let out = g
            .value(probs)
            .data()
            .chunks(v)
            .map(|row| row.iter().map(|p| p.ln()).collect())
            .collect();
        g.truncate(self.mark);
        Ok(out)
    }
}

fn allowed(token: u32) -> bool {
    !matches!(token, PAD | UNK | CLS | SEP)
}

/// Highest-scoring output for one encoded source.
///
/// Hypotheses are ranked by total log-probability. A hypothesis that
/// reaches the length cap can only emit `<eos>`. Search stops once the best
/// finished hypothesis outscores every live one, so with a beam at least as
/// large as the number of candidate sequences the result is the exact
/// maximiser.
pub fn beam_search(model: &FlatNct, source: &SourceInput, search: &Search) -> Result<Hypothesis> {
    if search.beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let limit = search.limit(model, source);
    let mut session = Session::new(model, source)?;
    let mut live: Vec<(Vec<u32>, f64)> = vec![(vec![EOS], 0.0)];
    let mut best: Option<Hypothesis> = None;
    while !live.is_empty() {
        let prefixes: Vec<&[u32]> = live.iter().map(|(p, _)| p.as_slice()).collect();
        let dists = session.next_log_probs(&prefixes)?;
        let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
        for (h, ((prefix, score), dist)) in live.iter().zip(&dists).enumerate() {
            if prefix.len() - 1 >= limit {
                candidates.push((score + dist[EOS as usize], h, EOS));
                continue;
            }
            for (tok, &lp) in dist.iter().enumerate() {
                if allowed(tok as u32) {
                    candidates.push((score + lp, h, tok as u32));
                }
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        candidates.truncate(search.beam);
        let mut next = Vec::new();
        for (score, h, tok) in candidates {
            if tok == EOS {
                if best.as_ref().map_or(true, |b| score > b.log_prob) {
                    best = Some(Hypothesis {
                        tokens: live[h].0[1..].to_vec(),
                        log_prob: score,
                    });
                }
            } else {
                let mut p = live[h].0.clone();
                p.push(tok);
                next.push((p, score));
            }
        }
        if let Some(b) = &best {
            next.retain(|(_, s)| *s > b.log_prob);
        }
        live = next;
    }
    Ok(best.expect("the length cap forces every hypothesis to finish"))
}

/// Translates every turn of a source dialogue in order. With
/// `target_context`, the turns generated so far stand in for the target
/// history.
pub fn translate_dialogue(
    model: &FlatNct,
    source: &EncDialogue,
    window: usize,
    target_context_on: bool,
    search: &Search,
) -> Result<Vec<Vec<u32>>> {
    let mut generated: Vec<EncUtt> = Vec::with_capacity(source.len());
    for u in 1..=source.len() {
        let history = if target_context_on {
            target_context(&generated, u, window)?
        } else {
            &[]
        };
        let input = source_with_history(source, history, u, window, model.config())?;
        let hyp = beam_search(model, &input, search)?;
        let turn = &source.turns[u - 1];
        generated.push(EncUtt {
            ids: hyp.tokens,
            speaker: turn.speaker,
            turn: turn.turn,
        });
    }
    Ok(generated.into_iter().map(|u| u.ids).collect())
}

/// Translates source-side records into bilingual records whose target side
/// holds the generated text.
pub fn translate_corpus(
    model: &FlatNct,
    vocab: &Vocabulary,
    dialogues: &[Dialogue],
    window: usize,
    target_context_on: bool,
    search: &Search,
) -> Result<Vec<Dialogue>> {
    if vocab.len() != model.vocab_size() {
        return Err(Error::VocabMismatch(format!(
            "vocabulary has {} tokens, model {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    dialogues
        .iter()
        .map(|d| {
            let enc = EncDialogue::encode(&d.id, d.source(), vocab);
            let outputs = translate_dialogue(model, &enc, window, target_context_on, search)?;
            let aligned = d
                .source()
                .iter()
                .zip(outputs)
                .map(|(u, ids)| Utterance {
                    speaker: u.speaker,
                    turn: u.turn,
                    text: vocab.decode(&ids),
                    lang: crate::data::Lang::Target,
                })
                .collect();
            Ok(Dialogue {
                id: d.id.clone(),
                kind: crate::data::DialogueKind::BilingualPair,
                turns: d.source().to_vec(),
                aligned_turns: Some(aligned),
            })
        })
        .collect()
}
