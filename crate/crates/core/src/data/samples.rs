//! Labelled examples for the two auxiliary dialogue tasks.
//!
//! Utterance discrimination asks whether a candidate utterance belongs to
//! a context; speaker discrimination asks whether a context was written by
//! the same speaker as the candidate.

use rand::Rng;

use crate::error::{Error, Result};

use super::context::build_context;
use super::EncDialogue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AuxTask {
    Utterance,
    Speaker,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSample {
    pub task: AuxTask,
    /// Context utterances, oldest first.
    pub context: Vec<Vec<u32>>,
    pub candidate: Vec<u32>,
    pub label: bool,
    /// Index of the dialogue the context came from.
    pub dialogue: usize,
    /// Index of the dialogue the candidate came from.
    pub candidate_dialogue: usize,
    pub turn: usize,
}

fn texts(d: &EncDialogue, turns: &[usize]) -> Vec<Vec<u32>> {
    turns.iter().map(|&t| d.turns[t - 1].ids.clone()).collect()
}

/// One positive and `negatives` negatives for turn `u` of dialogue `d`.
/// Negatives keep the context and swap in a uniformly drawn utterance from
/// a different dialogue of the same corpus.
pub fn ud_samples<R: Rng>(
    corpus: &[EncDialogue],
    d: usize,
    u: usize,
    window: usize,
    negatives: usize,
    rng: &mut R,
) -> Result<Vec<LabeledSample>> {
    if corpus.len() < 2 {
        return Err(Error::Corpus(
            "utterance discrimination needs at least two dialogues".into(),
        ));
    }
    let dialogue = &corpus[d];
    if u < 2 {
        dialogue.turn(u)?;
        return Err(Error::Invalid(format!(
            "utterance discrimination needs a preceding turn, got turn {u}"
        )));
    }
    let ctx = build_context(dialogue, u, window)?;
    let context = texts(dialogue, &ctx.full);
    let mut out = vec![LabeledSample {
        task: AuxTask::Utterance,
        context: context.clone(),
        candidate: dialogue.turns[u - 1].ids.clone(),
        label: true,
        dialogue: d,
        candidate_dialogue: d,
        turn: u,
    }];
    for _ in 0..negatives {
        let mut e = rng.gen_range(0..corpus.len() - 1);
        if e >= d {
            e += 1;
        }
        let other = &corpus[e];
        let t = rng.gen_range(0..other.turns.len());
        out.push(LabeledSample {
            task: AuxTask::Utterance,
            context: context.clone(),
            candidate: other.turns[t].ids.clone(),
            label: false,
            dialogue: d,
            candidate_dialogue: e,
            turn: u,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SdOutcome {
    /// Positive (own speaker's context) then negative (other speaker's).
    Samples([LabeledSample; 2]),
    /// One speaker has no utterance in the window.
    Skipped,
}

/// Speaker-discrimination pair for turn `u`.
pub fn sd_samples(corpus: &[EncDialogue], d: usize, u: usize, window: usize) -> Result<SdOutcome> {
    let dialogue = &corpus[d];
    let ctx = build_context(dialogue, u, window)?;
    if u < 3 || ctx.s1.is_empty() || ctx.s2.is_empty() {
        return Ok(SdOutcome::Skipped);
    }
    let cur = &dialogue.turns[u - 1];
    let make = |turns: &[usize], label| LabeledSample {
        task: AuxTask::Speaker,
        context: texts(dialogue, turns),
        candidate: cur.ids.clone(),
        label,
        dialogue: d,
        candidate_dialogue: d,
        turn: u,
    };
    Ok(SdOutcome::Samples([
        make(ctx.speaker(cur.speaker), true),
        make(ctx.speaker(cur.speaker.other()), false),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EncUtt, Lang, Speaker};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(sizes: &[usize]) -> Vec<EncDialogue> {
        sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| EncDialogue {
                id: format!("d{k}"),
                lang: Lang::Source,
                turns: (1..=n)
                    .map(|t| EncUtt {
                        ids: vec![(100 * k + t) as u32],
                        speaker: Speaker::for_turn(t),
                        turn: t,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn negatives_never_come_from_the_same_dialogue() {
        let c = corpus(&[5, 4, 6, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 0..c.len() {
            for u in 2..=c[d].len() {
                let s = ud_samples(&c, d, u, 3, 4, &mut rng).unwrap();
                assert_eq!(s.len(), 5);
                assert!(s[0].label && s[0].candidate == c[d].turns[u - 1].ids);
                for neg in &s[1..] {
                    assert!(!neg.label);
                    assert_ne!(neg.candidate_dialogue, d);
                    assert_eq!(neg.candidate[0] as usize / 100, neg.candidate_dialogue);
                    assert_eq!(neg.context, s[0].context);
                }
            }
        }
    }

    #[test]
    fn single_dialogue_corpus_is_rejected() {
        let c = corpus(&[5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(ud_samples(&c, 0, 2, 3, 1, &mut rng), Err(Error::Corpus(_))));
    }

    #[test]
    fn speaker_pair_uses_own_then_other_speaker() {
        let c = corpus(&[6, 6]);
        let SdOutcome::Samples([pos, neg]) = sd_samples(&c, 0, 5, 3).unwrap() else {
            panic!("expected samples");
        };
        // Turn 5 is s1; window holds 2, 3, 4.
        assert_eq!(pos.context, vec![vec![3]]);
        assert_eq!(neg.context, vec![vec![2], vec![4]]);
        assert!(pos.label && !neg.label);
        assert_eq!(pos.candidate, vec![5]);
    }

    #[test]
    fn unbounded_window_uses_whole_histories() {
        let c = corpus(&[6, 6]);
        let SdOutcome::Samples([pos, neg]) = sd_samples(&c, 0, 5, usize::MAX).unwrap() else {
            panic!("expected samples");
        };
        assert_eq!(pos.context, vec![vec![1], vec![3]]);
        assert_eq!(neg.context, vec![vec![2], vec![4]]);
    }

    #[test]
    fn early_turns_are_skipped() {
        let c = corpus(&[6, 6]);
        assert_eq!(sd_samples(&c, 0, 1, 3).unwrap(), SdOutcome::Skipped);
        assert_eq!(sd_samples(&c, 0, 2, 3).unwrap(), SdOutcome::Skipped);
        assert_eq!(sd_samples(&c, 0, 3, 1).unwrap(), SdOutcome::Skipped);
        assert!(matches!(sd_samples(&c, 0, 3, 3).unwrap(), SdOutcome::Samples(_)));
    }
}
