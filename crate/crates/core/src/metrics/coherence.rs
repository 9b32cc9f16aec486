//! Embedding-based coherence between a translated utterance and the turns
//! before it.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::FlatNct;

/// Token vectors. Tokens without a vector are skipped when averaging.
#[derive(Clone, Debug)]
pub struct Embeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    /// Subword segmentation for model-derived tables; whitespace words
    /// otherwise.
    segmenter: Option<Vocabulary>,
}

impl Embeddings {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        if let Some((t, _)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Invalid(format!("embedding for `{t}` is not {dim}-dimensional")));
        }
        Ok(Embeddings {
            dim,
            vectors,
            segmenter: None,
        })
    }

    /// Rows of the model's word-embedding table, keyed by subword.
    pub fn from_model(vocab: &Vocabulary, model: &FlatNct) -> Result<Self> {
        if vocab.len() != model.vocab_size() {
            return Err(Error::VocabMismatch(format!(
                "vocabulary has {} tokens, model {}",
                vocab.len(),
                model.vocab_size()
            )));
        }
        let table = model
            .params()
            .by_name("embed.word")
            .ok_or_else(|| Error::Invalid("model has no word embeddings".into()))?;
        let dim = table.shape()[1];
        let vectors = (0..vocab.len() as u32)
            .filter(|&id| !Vocabulary::is_special(id))
            .map(|id| {
                let row = table.data()[id as usize * dim..(id as usize + 1) * dim].to_vec();
                (vocab.token(id).unwrap_or_default().to_string(), row)
            })
            .collect();
        Ok(Embeddings {
            dim,
            vectors,
            segmenter: Some(vocab.clone()),
        })
    }

    /// Reads `token v1 … vd` lines. Every line must have the same `d`.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let v = parts
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("embedding line {}: {e}", i + 1)))?;
            if *dim.get_or_insert(v.len()) != v.len() || v.is_empty() {
                return Err(Error::Invalid(format!("embedding line {}: wrong dimension", i + 1)));
            }
            vectors.insert(token.to_string(), v);
        }
        Embeddings::new(dim.unwrap_or(0), vectors)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::parse(std::io::BufReader::new(f))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        match &self.segmenter {
            Some(v) => v.pieces(text),
            None => text.split_whitespace().map(str::to_string).collect(),
        }
    }

    /// Mean vector over every covered token of `texts`; `None` when no
    /// token is covered.
    pub fn average(&self, texts: &[&str]) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for t in texts {
            for tok in self.tokens(t) {
                if let Some(v) = self.vectors.get(&tok) {
                    sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}

/// Cosine similarity, clamped to [-1, 1]; `None` for a zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean similarity to the 1st, 2nd and 3rd preceding utterance and to the
/// whole context window. Absent when no pair was measurable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub p3: Option<f64>,
    pub ctx: Option<f64>,
}

/// Running sums behind [`Coherence`], additive across dialogues.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoherenceStats {
    /// Indexed p1, p2, p3, ctx.
    pub sums: [f64; 4],
    pub counts: [usize; 4],
}

impl CoherenceStats {
    pub fn add(&mut self, other: &CoherenceStats) {
        for k in 0..4 {
            self.sums[k] += other.sums[k];
            self.counts[k] += other.counts[k];
        }
    }

    fn push(&mut self, k: usize, sim: Option<f64>) {
        if let Some(s) = sim {
            self.sums[k] += s;
            self.counts[k] += 1;
        }
    }

    pub fn mean(&self) -> Coherence {
        let m = |k: usize| (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64);
        Coherence {
            p1: m(0),
            p2: m(1),
            p3: m(2),
            ctx: m(3),
        }
    }
}

/// Similarities of every turn of one dialogue to its predecessors. The
/// context representation averages all tokens of the last `window` turns.
pub fn dialogue_coherence(turns: &[&str], window: usize, emb: &Embeddings) -> CoherenceStats {
    let mut stats = CoherenceStats::default();
    let vecs: Vec<Option<Vec<f64>>> = turns.iter().map(|t| emb.average(&[t])).collect();
    for u in 0..turns.len() {
        let Some(cur) = &vecs[u] else { continue };
        for d in 1..=3 {
            if u >= d {
                stats.push(d - 1, vecs[u - d].as_deref().and_then(|p| cosine(cur, p)));
            }
        }
        let from = u.saturating_sub(window);
        if from < u {
            let ctx = emb.average(&turns[from..u]);
            stats.push(3, ctx.as_deref().and_then(|c| cosine(cur, c)));
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(&str, &[f64])]) -> Embeddings {
        let dim = rows[0].1.len();
        Embeddings::new(dim, rows.iter().map(|(t, v)| (t.to_string(), v.to_vec())).collect()).unwrap()
    }

    #[test]
    fn self_similarity_and_orthogonality() {
        let e = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 2.0]), ("c", &[0.3, 0.7])]);
        let s = dialogue_coherence(&["a c", "a c"], 3, &e);
        assert_eq!(s.mean().p1, Some(1.0));
        let s = dialogue_coherence(&["a", "b"], 3, &e);
        assert_eq!(s.mean().p1, Some(0.0));
    }

    #[test]
    fn three_token_case_by_hand() {
        let e = table(&[("a", &[1.0, 2.0, 0.0]), ("b", &[0.0, 1.0, 1.0]), ("c", &[3.0, 0.0, 1.0])]);
        // mean(a, b, c) = (4/3, 1, 2/3) against c = (3, 0, 1).
        let m = [4.0 / 3.0, 1.0, 2.0 / 3.0];
        let dot: f64 = m[0] * 3.0 + m[2];
        let expect = dot / ((m[0] * m[0] + 1.0 + m[2] * m[2]).sqrt() * 10f64.sqrt());
        let s = dialogue_coherence(&["c", "a b c"], 1, &e).mean();
        assert!((s.p1.unwrap() - expect).abs() < 1e-12);
        assert!((s.ctx.unwrap() - expect).abs() < 1e-12);
        assert_eq!(s.p2, None);
    }

    #[test]
    fn uncovered_utterances_are_absent() {
        let e = table(&[("a", &[1.0])]);
        let s = dialogue_coherence(&["a", "zz", "a"], 3, &e);
        assert_eq!(s.counts, [0, 1, 0, 1]);
        assert_eq!(s.mean().p2, Some(1.0));
        assert!(Embeddings::parse("a 1 2\nb 1\n".as_bytes()).is_err());
        assert_eq!(Embeddings::parse("a 1 2\n\nb 3 4\n".as_bytes()).unwrap().dim(), 2);
    }

    #[test]
    fn context_spans_the_window() {
        let e = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let s = dialogue_coherence(&["a", "b", "b"], 2, &e);
        // Turn 2 against a scores 0, turn 3 against mean(a, b) = (0.5, 0.5).
        let expect = (0.0 + 1.0 / 2f64.sqrt()) / 2.0;
        assert!((s.mean().ctx.unwrap() - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_and_scale_invariant(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4),
            scale in 0.001f64..1000.0,
        ) {
            let names = ["a", "b", "c", "d"];
            let mk = |c: f64| Embeddings::new(3, names.iter().zip(&rows)
                .map(|(n, r)| (n.to_string(), r.iter().map(|x| x * c).collect())).collect()).unwrap();
            let turns = ["a b", "c", "d a", "b c d"];
            let base = dialogue_coherence(&turns, 3, &mk(1.0));
            let scaled = dialogue_coherence(&turns, 3, &mk(scale));
            prop_assert_eq!(base.counts, scaled.counts);
            for k in 0..4 {
                let n = base.counts[k] as f64;
                prop_assert!(base.sums[k] >= -n && base.sums[k] <= n);
                prop_assert!((base.sums[k] - scaled.sums[k]).abs() < 1e-12 * n.max(1.0));
            }
        }
    }
}
