//! Flattened model inputs.

use std::ops::Range;

use crate::error::{Error, Result};

use super::{EncUtt, CLS, EOS, SEP};

/// Encoder input: context utterances and the current utterance flattened
/// into one sequence, each utterance followed by a separator.
///
/// `c1 <sep> c2 <sep> … ck <sep> x <eos>`
///
/// Positions at or after `boundary` (the separator before `x`) form the
/// current segment. Position indices run continuously over the whole
/// sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceInput {
    pub ids: Vec<u32>,
    pub positions: Vec<usize>,
    pub speakers: Vec<usize>,
    pub turns: Vec<usize>,
    pub boundary: usize,
}

impl SourceInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn current_len(&self) -> usize {
        self.ids.len() - self.boundary
    }

    pub fn has_context(&self) -> bool {
        self.boundary > 0
    }
}

/// Builds the encoder input. When the sequence would exceed `max_len`, the
/// oldest context utterances are dropped first; the current utterance is
/// never cut.
pub fn encode_source(
    context: &[&EncUtt],
    current: &EncUtt,
    max_len: usize,
    max_turns: usize,
) -> Result<SourceInput> {
    let own = current.ids.len() + 2;
    if own > max_len {
        return Err(Error::Invalid(format!(
            "utterance of {} tokens does not fit the {max_len}-position limit",
            current.ids.len()
        )));
    }
    let mut budget = max_len - own;
    let mut keep = 0;
    for u in context.iter().rev() {
        if u.ids.len() + 1 > budget {
            break;
        }
        budget -= u.ids.len() + 1;
        keep += 1;
    }
    let context = &context[context.len() - keep..];

    let turn_id = |t: usize| t.saturating_sub(1).min(max_turns.saturating_sub(1));
    let mut out = SourceInput {
        ids: Vec::new(),
        positions: Vec::new(),
        speakers: Vec::new(),
        turns: Vec::new(),
        boundary: 0,
    };
    let push = |out: &mut SourceInput, id: u32, u: &EncUtt| {
        out.positions.push(out.ids.len());
        out.ids.push(id);
        out.speakers.push(u.speaker.id());
        out.turns.push(turn_id(u.turn));
    };
    for (i, u) in context.iter().enumerate() {
        for &t in &u.ids {
            push(&mut out, t, u);
        }
        if i + 1 < context.len() {
            push(&mut out, SEP, u);
        }
    }
    out.boundary = out.ids.len();
    push(&mut out, SEP, current);
    for &t in &current.ids {
        push(&mut out, t, current);
    }
    push(&mut out, EOS, current);
    Ok(out)
}

/// Decoder input and gold output: `<eos> y` predicts `y <eos>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetInput {
    pub input: Vec<u32>,
    pub gold: Vec<u32>,
}

impl TargetInput {
    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

/// Target side truncated so that `gold` holds at most `max_len` tokens.
pub fn encode_target(target: &[u32], max_len: usize) -> TargetInput {
    let n = target.len().min(max_len.saturating_sub(1));
    let mut input = Vec::with_capacity(n + 1);
    input.push(EOS);
    input.extend_from_slice(&target[..n]);
    let mut gold = target[..n].to_vec();
    gold.push(EOS);
    TargetInput { input, gold }
}

/// Input for the auxiliary classifiers: a summary token, the context and
/// the candidate in one sequence.
///
/// `<cls> c1 <sep> … ck <sep> candidate <eos>`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairInput {
    pub ids: Vec<u32>,
    pub candidate: Range<usize>,
}

impl PairInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Oldest context utterances are dropped to fit `max_len`; a candidate
/// that alone overflows is cut at the end.
pub fn encode_pair_input(context: &[Vec<u32>], candidate: &[u32], max_len: usize) -> PairInput {
    assert!(max_len >= 3, "pair input needs room for <cls>, one token and <eos>");
    let cand = &candidate[..candidate.len().min(max_len - 2)];
    let mut budget = max_len - 2 - cand.len();
    let mut keep = 0;
    for c in context.iter().rev() {
        if c.len() + 1 > budget {
            break;
        }
        budget -= c.len() + 1;
        keep += 1;
    }
    let mut ids = vec![CLS];
    for c in &context[context.len() - keep..] {
        ids.extend_from_slice(c);
        ids.push(SEP);
    }
    let start = ids.len();
    ids.extend_from_slice(cand);
    let end = ids.len();
    ids.push(EOS);
    PairInput {
        ids,
        candidate: start..end,
    }
}
