//! Corpus BLEU-4 over whitespace tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of corpus BLEU. Statistics of disjoint parts of a
/// corpus add up to those of the whole.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    /// Clipped n-gram matches for n = 1..=4.
    pub matches: [usize; MAX_ORDER],
    /// Candidate n-gram counts for n = 1..=4.
    pub totals: [usize; MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn of_pair(candidate: &[&str], reference: &[&str]) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Invalid("BLEU reference is empty".into()));
        }
        let mut s = BleuStats {
            candidate_len: candidate.len(),
            reference_len: reference.len(),
            ..BleuStats::default()
        };
        for n in 1..=MAX_ORDER {
            let refs = ngram_counts(reference, n);
            let cands = ngram_counts(candidate, n);
            s.totals[n - 1] = candidate.len().saturating_sub(n - 1);
            s.matches[n - 1] = cands
                .iter()
                .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
                .sum();
        }
        Ok(s)
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// Score in [0, 100]. Higher-order precisions with no match use add-one
    /// counts; no unigram match scores 0.
    pub fn score(&self) -> f64 {
        if self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
            let p = if self.matches[n] == 0 { (m + 1.0) / (t + 1.0) } else { m / t };
            log_sum += p.ln();
        }
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        (100.0 * brevity * (log_sum / MAX_ORDER as f64).exp()).clamp(0.0, 100.0)
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut out = HashMap::new();
    for g in tokens.windows(n) {
        *out.entry(g).or_insert(0) += 1;
    }
    out
}

/// Corpus BLEU of whitespace-tokenised candidates against one reference
/// each.
pub fn corpus_bleu<S: AsRef<str>>(candidates: &[S], references: &[S]) -> Result<f64> {
    Ok(corpus_stats(candidates, references)?.score())
}

pub fn corpus_stats<S: AsRef<str>>(candidates: &[S], references: &[S]) -> Result<BleuStats> {
    if candidates.len() != references.len() {
        return Err(Error::Invalid(format!(
            "{} candidates for {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut total = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        let c: Vec<&str> = c.as_ref().split_whitespace().collect();
        let r: Vec<&str> = r.as_ref().split_whitespace().collect();
        total.add(&BleuStats::of_pair(&c, &r)?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    /// Clipped counts by rescanning token strings.
    fn oracle(cands: &[String], refs: &[String]) -> f64 {
        let mut m = [0f64; 4];
        let mut t = [0f64; 4];
        let (mut c_len, mut r_len) = (0f64, 0f64);
        for (c, r) in cands.iter().zip(refs) {
            let c: Vec<String> = c.split(' ').filter(|w| !w.is_empty()).map(String::from).collect();
            let r: Vec<String> = r.split(' ').filter(|w| !w.is_empty()).map(String::from).collect();
            c_len += c.len() as f64;
            r_len += r.len() as f64;
            for n in 1..=4 {
                let grams = |v: &Vec<String>| -> Vec<String> {
                    if v.len() < n {
                        return vec![];
                    }
                    (0..=v.len() - n).map(|i| v[i..i + n].join("\u{1}")).collect()
                };
                let cg = grams(&c);
                let rg = grams(&r);
                t[n - 1] += cg.len() as f64;
                let mut seen: Vec<&String> = Vec::new();
                for g in &cg {
                    if seen.contains(&g) {
                        continue;
                    }
                    seen.push(g);
                    let in_c = cg.iter().filter(|x| *x == g).count();
                    let in_r = rg.iter().filter(|x| *x == g).count();
                    m[n - 1] += in_c.min(in_r) as f64;
                }
            }
        }
        if m[0] == 0.0 {
            return 0.0;
        }
        let mut prod = 1.0;
        for n in 0..4 {
            prod *= if m[n] == 0.0 { (m[n] + 1.0) / (t[n] + 1.0) } else { m[n] / t[n] };
        }
        let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len / c_len).exp() };
        100.0 * bp * prod.powf(0.25)
    }

    fn random_sentence<R: Rng>(rng: &mut R, max: usize) -> String {
        let words = ["a", "b", "c", "d", "e"];
        let n = rng.gen_range(1..=max);
        (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn matches_brute_force_on_random_corpora() {
        let mut rng = crate::rng::stream(17, &[]);
        for _ in 0..20 {
            let k = rng.gen_range(1..4);
            let cands: Vec<String> = (0..k).map(|_| random_sentence(&mut rng, 8)).collect();
            let refs: Vec<String> = (0..k).map(|_| random_sentence(&mut rng, 8)).collect();
            let got = corpus_bleu(&cands, &refs).unwrap();
            assert!((got - oracle(&cands, &refs)).abs() < 1e-9, "{cands:?} {refs:?}");
        }
    }

    #[test]
    fn identity_and_empty_cases() {
        let refs = ["the cat sat on the mat", "a b"];
        assert_eq!(corpus_bleu(&refs, &refs).unwrap(), 100.0);
        assert_eq!(corpus_bleu(&["", ""], &refs).unwrap(), 0.0);
        assert!(corpus_bleu(&["x"], &[""]).is_err());
        assert!(corpus_bleu(&["x"], &["x", "y"]).is_err());
    }

    #[test]
    fn clipped_unigram_precision() {
        let s = BleuStats::of_pair(&["the"; 4], &["the", "cat"]).unwrap();
        assert_eq!((s.matches[0], s.totals[0]), (1, 4));
    }

    #[test]
    fn pair_order_does_not_matter() {
        let mut rng = crate::rng::stream(3, &[]);
        let mut pairs: Vec<(String, String)> =
            (0..6).map(|_| (random_sentence(&mut rng, 6), random_sentence(&mut rng, 6))).collect();
        let score = |p: &[(String, String)]| {
            let (c, r): (Vec<String>, Vec<String>) = p.iter().cloned().unzip();
            corpus_bleu(&c, &r).unwrap()
        };
        let before = score(&pairs);
        pairs.shuffle(&mut rng);
        assert_eq!(score(&pairs), before);
    }
}
