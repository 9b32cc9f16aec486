use crate::data::{encode_pair_input, LabeledSample, SourceInput, TargetInput};
use crate::error::{Error, Result};
use crate::model::{FlatNct, Head, Pass};
use crate::params::Bound;
use crate::tensor::{Graph, Var};

/// One source/target pair ready for the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationExample {
    pub source: SourceInput,
    pub target: TargetInput,
}

/// Label-smoothed negative log-likelihood per target token, averaged over
/// every target token of the batch.
pub fn translation_loss(
    model: &FlatNct,
    g: &mut Graph,
    b: &Bound,
    batch: &[TranslationExample],
    smoothing: f64,
    pass: &mut Pass,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sources: Vec<SourceInput> = batch.iter().map(|e| e.source.clone()).collect();
    let (memory, segs) = model.encode_flat(g, b, &sources, pass)?;
    let prefixes: Vec<&[u32]> = batch.iter().map(|e| e.target.input.as_slice()).collect();
    let probs = model.decode(g, b, &prefixes, memory, &segs, pass)?;
    let gold: Vec<usize> = batch
        .iter()
        .flat_map(|e| e.target.gold.iter().map(|&t| t as usize))
        .collect();
    let total = g.smoothed_cross_entropy(probs, &gold, smoothing);
    Ok(g.scale(total, 1.0 / gold.len() as f64))
}

/// Mean binary negative log-likelihood of a classifier over labelled
/// samples.
pub fn aux_loss(
    model: &FlatNct,
    g: &mut Graph,
    b: &Bound,
    head: Head,
    samples: &[LabeledSample],
    pass: &mut Pass,
) -> Result<Var> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let max_len = model.config().max_len;
    let pairs: Vec<_> = samples
        .iter()
        .map(|s| encode_pair_input(&s.context, &s.candidate, max_len))
        .collect();
    let probs = model.pair_probabilities(g, b, head, &pairs, pass)?;
    let mut total = None;
    for (i, s) in samples.iter().enumerate() {
        let p = g.slice_rows(probs, i, 1);
        let nll = g.binary_nll(p, s.label);
        total = Some(match total {
            None => nll,
            Some(t) => g.add(t, nll),
        });
    }
    let total = total.expect("non-empty batch");
    Ok(g.scale(total, 1.0 / samples.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_source, encode_target, EncUtt, Speaker};
    use crate::model::ModelConfig;
    use crate::rng::stream;

    fn model(vocab: usize) -> FlatNct {
        let cfg = ModelConfig {
            hidden: 8,
            ff: 16,
            heads: 2,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        FlatNct::new(cfg, vocab, &mut stream(3, &[])).unwrap()
    }

    fn example(src: &[u32], tgt: &[u32]) -> TranslationExample {
        let u = EncUtt {
            ids: src.to_vec(),
            speaker: Speaker::S1,
            turn: 1,
        };
        TranslationExample {
            source: encode_source(&[], &u, 32, 8).unwrap(),
            target: encode_target(tgt, 32),
        }
    }

    fn loss_of(m: &FlatNct, batch: &[TranslationExample], eps: f64) -> f64 {
        let mut g = Graph::new();
        let b = Bound::frozen(&mut g, m.params());
        let l = translation_loss(m, &mut g, &b, batch, eps, &mut Pass::eval()).unwrap();
        g.scalar(l)
    }

    #[test]
    fn uniform_model_costs_log_vocab() {
        let mut m = model(10);
        let w = m.params().index_of("out.weight").unwrap();
        m.params_mut().get_mut(w).data_mut().fill(0.0);
        let batch = [example(&[5, 6], &[7, 8, 9])];
        for eps in [0.0, 0.1] {
            assert!((loss_of(&m, &batch, eps) - 10f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicating_the_batch_keeps_the_mean() {
        let m = model(10);
        let a = vec![example(&[5, 6], &[7, 8]), example(&[9], &[5, 6, 7])];
        let mut b = a.clone();
        b.extend(a.clone());
        assert!((loss_of(&m, &a, 0.1) - loss_of(&m, &b, 0.1)).abs() < 1e-12);
    }

    #[test]
    fn empty_batches_are_errors() {
        let m = model(10);
        let mut g = Graph::new();
        let b = Bound::frozen(&mut g, m.params());
        assert!(matches!(
            translation_loss(&m, &mut g, &b, &[], 0.1, &mut Pass::eval()),
            Err(Error::EmptyBatch)
        ));
        assert!(matches!(
            aux_loss(&m, &mut g, &b, Head::Utterance, &[], &mut Pass::eval()),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn zero_head_costs_log_two() {
        let mut m = model(10);
        let h = m.head_index(Head::Speaker);
        m.params_mut().get_mut(h).data_mut().fill(0.0);
        let s = LabeledSample {
            task: crate::data::AuxTask::Speaker,
            context: vec![vec![5, 6]],
            candidate: vec![7],
            label: true,
            dialogue: 0,
            candidate_dialogue: 0,
            turn: 3,
        };
        let mut neg = s.clone();
        neg.label = false;
        let mut g = Graph::new();
        let b = Bound::frozen(&mut g, m.params());
        let l = aux_loss(&m, &mut g, &b, Head::Speaker, &[s, neg], &mut Pass::eval()).unwrap();
        assert!((g.scalar(l) - 2f64.ln()).abs() < 1e-12);
    }
}
