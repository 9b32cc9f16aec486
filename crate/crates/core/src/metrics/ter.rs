//! Translation edit rate with a greedy block-shift search.

use crate::error::{Error, Result};

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Moves `words[start..start + len]` so that it begins at `dest` of the
/// sequence that remains after removing it.
pub fn shift<T: Clone>(words: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let mut rest: Vec<T> = words[..start].to_vec();
    rest.extend_from_slice(&words[start + len..]);
    let block = &words[start..start + len];
    let mut out = rest[..dest].to_vec();
    out.extend_from_slice(block);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Every distinct shift of `words`, in a fixed order.
pub fn all_shifts<T: Clone + PartialEq>(words: &[T]) -> Vec<Vec<T>> {
    let n = words.len();
    let mut out = Vec::new();
    for start in 0..n {
        for len in 1..=n - start {
            for dest in 0..=n - len {
                if dest == start {
                    continue;
                }
                let s = shift(words, start, len, dest);
                if s != words {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Edit count of `candidate` against `reference`: shifts found greedily
/// (each taken only while it lowers the total cost, best first) plus the
/// remaining insertions, deletions and substitutions.
pub fn ter_edits<T: Clone + PartialEq>(candidate: &[T], reference: &[T]) -> usize {
    let mut words = candidate.to_vec();
    let mut dist = edit_distance(&words, reference);
    let mut shifts = 0;
    loop {
        let mut best: Option<(usize, Vec<T>)> = None;
        for s in all_shifts(&words) {
            let d = edit_distance(&s, reference);
            if d + 1 < dist && best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, s));
            }
        }
        match best {
            Some((d, s)) => {
                words = s;
                dist = d;
                shifts += 1;
            }
            None => return shifts + dist,
        }
    }
}

/// Edit rate of one whitespace-tokenised pair.
pub fn ter(candidate: &str, reference: &str) -> Result<f64> {
    let c: Vec<&str> = candidate.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        return Err(Error::Invalid("TER reference is empty".into()));
    }
    Ok(ter_edits(&c, &r) as f64 / r.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use std::collections::HashSet;

    /// Fewest shifts plus edit distance over every reachable reordering.
    fn exhaustive(c: &[&str], r: &[&str]) -> usize {
        let mut best = edit_distance(c, r);
        let mut frontier: Vec<Vec<&str>> = vec![c.to_vec()];
        let mut seen: HashSet<Vec<&str>> = frontier.iter().cloned().collect();
        let mut depth = 0;
        while !frontier.is_empty() && depth < best {
            depth += 1;
            let mut next = Vec::new();
            for w in &frontier {
                for s in all_shifts(w) {
                    if seen.insert(s.clone()) {
                        best = best.min(depth + edit_distance(&s, r));
                        next.push(s);
                    }
                }
            }
            frontier = next;
        }
        best
    }

    #[test]
    fn worked_cases() {
        assert_eq!(ter("a b c", "a b c").unwrap(), 0.0);
        assert_eq!(ter("a b c d", "a x c d").unwrap(), 0.25);
        assert_eq!(ter("b a", "a b").unwrap(), 0.5);
        assert_eq!(ter("", "a b").unwrap(), 1.0);
        assert!(ter("a", "").is_err());
    }

    #[test]
    fn edit_distance_by_hand() {
        assert_eq!(edit_distance(&["a", "b"], &[]), 2);
        assert_eq!(edit_distance(&["k", "i", "t"], &["s", "i", "t", "s"]), 2);
    }

    #[test]
    fn greedy_matches_exhaustive_search() {
        let mut rng = crate::rng::stream(11, &[]);
        let words = ["a", "b", "c", "d", "e", "f", "g"];
        for case in 0..20 {
            let n = rng.gen_range(2..=5);
            let reference: Vec<&str> = words.choose_multiple(&mut rng, n).copied().collect();
            let mut cand = reference.clone();
            if rng.gen_bool(0.7) {
                let start = rng.gen_range(0..n);
                let len = rng.gen_range(1..=n - start);
                let dest = rng.gen_range(0..=n - len);
                cand = shift(&cand, start, len, dest);
            }
            if rng.gen_bool(0.5) {
                let i = rng.gen_range(0..cand.len());
                cand[i] = "x";
            }
            if rng.gen_bool(0.3) {
                cand.push("y");
            }
            assert_eq!(ter_edits(&cand, &reference), exhaustive(&cand, &reference), "case {case}: {cand:?} vs {reference:?}");
        }
    }
}
