//! Byte-pair-encoding subword vocabulary.
//!
//! Merges are learned over characters inside whitespace-separated words.
//! Encoded pieces that do not end a word carry a `@@` suffix, so decoding
//! is a join on spaces followed by removing `"@@ "`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const EOS: u32 = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<unk>", "<cls>", "<sep>", "<eos>"];
const CONT: &str = "@@";
const HEADER: &str = "nct-vocab v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Corpus(format!("vocabulary must start with {s} at id {i}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Corpus(format!("bad vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Corpus(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let ranks = merges.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Ok(Vocabulary {
            tokens,
            index,
            merges,
            ranks,
        })
    }

    /// Learns up to `num_merges` merges from `texts` (most frequent pair
    /// first, ties broken lexicographically) and builds the vocabulary:
    /// special tokens, then every character in both word-final and
    /// continuation form, then every other piece the training text encodes
    /// to, in first-seen order.
    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>, num_merges: usize) -> Self {
        let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in texts {
            for w in t.split_whitespace() {
                *word_counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(Vec<String>, usize)> = word_counts
            .iter()
            .map(|(w, &c)| (w.chars().map(String::from).collect(), c))
            .collect();

        let mut merges = Vec::new();
        while merges.len() < num_merges {
            let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (syms, c) in &words {
                for p in syms.windows(2) {
                    *pairs.entry((&p[0], &p[1])).or_default() += c;
                }
            }
            // BTreeMap iteration is lexicographic, so the first maximum wins ties.
            let Some(best) = pairs
                .iter()
                .fold(None::<(&(&str, &str), usize)>, |acc, (p, &c)| match acc {
                    Some((_, bc)) if bc >= c => acc,
                    _ => Some((p, c)),
                })
                .map(|(p, _)| (p.0.to_string(), p.1.to_string()))
            else {
                break;
            };
            for (syms, _) in &mut words {
                *syms = merge_pair(syms, &best.0, &best.1);
            }
            merges.push(best);
        }

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
        let mut add = |t: String, tokens: &mut Vec<String>| {
            if seen.insert(t.clone()) {
                tokens.push(t);
            }
        };
        let chars: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
        for c in &chars {
            add(c.to_string(), &mut tokens);
            add(format!("{c}{CONT}"), &mut tokens);
        }
        for (syms, _) in &words {
            let n = syms.len();
            for (i, s) in syms.iter().enumerate() {
                add(piece(s, i + 1 < n), &mut tokens);
            }
        }
        Self::from_parts(tokens, merges).expect("trained vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Subword pieces of one word after applying the merges by rank.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> = word.chars().map(String::from).collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())).map(|&r| (r, p)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, p)| (p[0].clone(), p[1].clone()));
            match best {
                Some((a, b)) => syms = merge_pair(&syms, &a, &b),
                None => return syms,
            }
        }
    }

    /// Subword token strings for a whole text.
    pub fn pieces(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            let syms = self.segment_word(w);
            let n = syms.len();
            out.extend(syms.iter().enumerate().map(|(i, s)| piece(s, i + 1 < n)));
        }
        out
    }

    /// Token ids for `text`. A merged piece missing from the vocabulary
    /// falls back to its characters; unseen characters become `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for p in self.pieces(text) {
            if let Some(id) = self.id(&p) {
                out.push(id);
                continue;
            }
            let (body, continues) = match p.strip_suffix(CONT) {
                Some(b) => (b, true),
                None => (p.as_str(), false),
            };
            let n = body.chars().count();
            for (i, c) in body.chars().enumerate() {
                let ch = piece(&c.to_string(), continues || i + 1 < n);
                out.push(self.id(&ch).unwrap_or(UNK));
            }
        }
        out
    }

    /// Inverse of [`encode`](Self::encode) for in-vocabulary text. Special
    /// tokens other than `<unk>` are dropped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let joined = ids
            .iter()
            .filter(|&&i| !matches!(i, PAD | CLS | SEP | EOS))
            .map(|&i| self.token(i).unwrap_or(SPECIALS[UNK as usize]))
            .collect::<Vec<_>>()
            .join(" ");
        let text = joined.replace("@@ ", "");
        text.strip_suffix(CONT).map(str::to_string).unwrap_or(text)
    }

    /// Word-level view of token ids: continuation pieces are glued to the
    /// word they start.
    pub fn words(&self, ids: &[u32]) -> Vec<String> {
        self.decode(ids).split_whitespace().map(str::to_string).collect()
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// Hex SHA-256 of the serialised vocabulary.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\ntokens {}\n", self.tokens.len());
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        let _ = writeln!(s, "merges {}", self.merges.len());
        for (a, b) in &self.merges {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Corpus(format!("vocabulary file: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("missing header"));
        }
        let count = |line: Option<&str>, key: &str| -> Result<usize> {
            line.and_then(|l| l.strip_prefix(key))
                .and_then(|n| n.trim().parse().ok())
                .ok_or_else(|| bad(&format!("expected `{key}<count>`")))
        };
        let n = count(lines.next(), "tokens ")?;
        let tokens = (0..n)
            .map(|_| lines.next().map(str::to_string).ok_or_else(|| bad("truncated token list")))
            .collect::<Result<Vec<_>>>()?;
        let m = count(lines.next(), "merges ")?;
        let merges = (0..m)
            .map(|_| {
                let line = lines.next().ok_or_else(|| bad("truncated merge list"))?;
                let mut it = line.split(' ');
                match (it.next(), it.next(), it.next()) {
                    (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                        Ok((a.to_string(), b.to_string()))
                    }
                    _ => Err(bad(&format!("bad merge line {line:?}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(tokens, merges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_text(&text)
    }
}

fn piece(sym: &str, continues: bool) -> String {
    if continues {
        format!("{sym}{CONT}")
    } else {
        sym.to_string()
    }
}

fn merge_pair(syms: &[String], a: &str, b: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
            out.push(format!("{a}{b}"));
            i += 2;
        } else {
            out.push(syms[i].clone());
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let v = Vocabulary::train(["aa aa ab"], 1);
        assert_eq!(v.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(v.pieces("aa ab"), vec!["aa", "a@@", "b"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::train(["xy ab"], 1);
        assert_eq!(v.merges()[0], ("a".to_string(), "b".to_string()));
    }

    #[test]
    fn special_ids_are_fixed() {
        let v = Vocabulary::train(["hello world"], 10);
        assert_eq!(v.token(PAD), Some("<pad>"));
        assert_eq!(v.token(UNK), Some("<unk>"));
        assert_eq!(v.token(CLS), Some("<cls>"));
        assert_eq!(v.token(SEP), Some("<sep>"));
        assert_eq!(v.token(EOS), Some("<eos>"));
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let v = Vocabulary::train(["abc"], 2);
        let ids = v.encode("abz");
        assert!(ids.contains(&UNK));
        assert!(!v.encode("cab").contains(&UNK));
    }

    #[test]
    fn text_format_round_trip() {
        let v = Vocabulary::train(["the cat sat on the mat", "a cat"], 20);
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert!(Vocabulary::from_text("junk").is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in proptest::collection::vec("[a-e]{1,6}", 1..8), merges in 0usize..30) {
            let corpus = "abc bad cab deed ace bee dab";
            let v = Vocabulary::train([corpus], merges);
            let text = words.join(" ");
            let ids = v.encode(&text);
            prop_assert!(!ids.contains(&UNK));
            prop_assert_eq!(v.decode(&ids), text);
        }
    }
}
