//! Dialogue records and the line-oriented JSON corpus format.
//!
//! One dialogue per line:
//!
//! ```json
//! {"id":"d7","kind":"bilingual-pair",
//!  "turns":[{"speaker":"s1","turn":1,"text":"...","lang":"src"}],
//!  "aligned_turns":[{"speaker":"s1","turn":1,"text":"...","lang":"tgt"}]}
//! ```
//!
//! `aligned_turns` is present only for bilingual pairs and holds the
//! target-language side turn for turn.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "s1")]
    S1,
    #[serde(rename = "s2")]
    S2,
}

impl Speaker {
    /// Speakers alternate, `s1` on odd turns.
    pub fn for_turn(turn: usize) -> Speaker {
        if turn % 2 == 1 {
            Speaker::S1
        } else {
            Speaker::S2
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::S1 => Speaker::S2,
            Speaker::S2 => Speaker::S1,
        }
    }

    pub fn id(self) -> usize {
        match self {
            Speaker::S1 => 0,
            Speaker::S2 => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lang {
    #[serde(rename = "src")]
    Source,
    #[serde(rename = "tgt")]
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DialogueKind {
    #[serde(rename = "bilingual-pair")]
    BilingualPair,
    #[serde(rename = "monolingual")]
    Monolingual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub speaker: Speaker,
    pub turn: usize,
    pub text: String,
    pub lang: Lang,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub id: String,
    pub kind: DialogueKind,
    pub turns: Vec<Utterance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aligned_turns: Option<Vec<Utterance>>,
}

impl Dialogue {
    /// Builds a monolingual dialogue from texts, assigning turns and
    /// alternating speakers.
    pub fn monolingual(id: impl Into<String>, lang: Lang, texts: &[&str]) -> Self {
        Dialogue {
            id: id.into(),
            kind: DialogueKind::Monolingual,
            turns: make_turns(lang, texts.iter().map(|s| s.to_string())),
            aligned_turns: None,
        }
    }

    pub fn bilingual(id: impl Into<String>, source: &[&str], target: &[&str]) -> Self {
        Dialogue {
            id: id.into(),
            kind: DialogueKind::BilingualPair,
            turns: make_turns(Lang::Source, source.iter().map(|s| s.to_string())),
            aligned_turns: Some(make_turns(Lang::Target, target.iter().map(|s| s.to_string()))),
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Source-side turns for bilingual pairs, the only side otherwise.
    pub fn source(&self) -> &[Utterance] {
        &self.turns
    }

    pub fn target(&self) -> Option<&[Utterance]> {
        self.aligned_turns.as_deref()
    }

    /// Language of a monolingual dialogue's turns.
    pub fn lang(&self) -> Option<Lang> {
        self.turns.first().map(|u| u.lang)
    }

    /// Checks turn numbering, speaker alternation and side alignment.
    pub fn validate(&self) -> Result<()> {
        let check_side = |turns: &[Utterance]| -> Result<()> {
            for (i, u) in turns.iter().enumerate() {
                if u.turn != i + 1 {
                    return Err(Error::Corpus(format!(
                        "dialogue `{}`: expected turn {} but found {}",
                        self.id,
                        i + 1,
                        u.turn
                    )));
                }
                if u.speaker != Speaker::for_turn(u.turn) {
                    return Err(Error::Corpus(format!(
                        "dialogue `{}`: turn {} spoken by {:?} breaks alternation",
                        self.id, u.turn, u.speaker
                    )));
                }
            }
            Ok(())
        };
        if self.turns.is_empty() {
            return Err(Error::Corpus(format!("dialogue `{}` has no turns", self.id)));
        }
        check_side(&self.turns)?;
        match (self.kind, &self.aligned_turns) {
            (DialogueKind::BilingualPair, Some(t)) => {
                if t.len() != self.turns.len() {
                    return Err(Error::Misaligned(self.id.clone()));
                }
                check_side(t)?;
                if self.turns.iter().any(|u| u.lang != Lang::Source)
                    || t.iter().any(|u| u.lang != Lang::Target)
                {
                    return Err(Error::Corpus(format!(
                        "dialogue `{}`: bilingual sides must be src then tgt",
                        self.id
                    )));
                }
            }
            (DialogueKind::BilingualPair, None) => {
                return Err(Error::Corpus(format!(
                    "dialogue `{}`: bilingual pair without aligned_turns",
                    self.id
                )))
            }
            (DialogueKind::Monolingual, Some(_)) => {
                return Err(Error::Corpus(format!(
                    "dialogue `{}`: monolingual dialogue with aligned_turns",
                    self.id
                )))
            }
            (DialogueKind::Monolingual, None) => {
                let lang = self.turns[0].lang;
                if self.turns.iter().any(|u| u.lang != lang) {
                    return Err(Error::Corpus(format!(
                        "dialogue `{}`: mixed languages in a monolingual dialogue",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn make_turns(lang: Lang, texts: impl Iterator<Item = String>) -> Vec<Utterance> {
    texts
        .enumerate()
        .map(|(i, text)| Utterance {
            speaker: Speaker::for_turn(i + 1),
            turn: i + 1,
            text,
            lang,
        })
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<Dialogue>> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    parse_corpus(BufReader::new(f)).map_err(|e| match e {
        Error::Corpus(msg) => Error::Corpus(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<Dialogue>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line)
            .map_err(|e| Error::Corpus(format!("line {}: {e}", n + 1)))?;
        d.validate()?;
        out.push(d);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    for d in dialogues {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json_lines() {
        let ds = vec![
            Dialogue::bilingual("a", &["x1", "x2"], &["y1", "y2"]),
            Dialogue::monolingual("b", Lang::Target, &["q", "r", "s"]),
        ];
        let mut buf = Vec::new();
        for d in &ds {
            serde_json::to_writer(&mut buf, d).unwrap();
            buf.push(b'\n');
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#""kind":"bilingual-pair""#));
        assert!(text.contains(r#""speaker":"s2""#));
        assert!(text.contains(r#""lang":"tgt""#));
        let back = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_broken_alternation_and_misalignment() {
        let mut d = Dialogue::monolingual("m", Lang::Source, &["a", "b"]);
        d.turns[1].speaker = Speaker::S1;
        assert!(d.validate().is_err());

        let mut d = Dialogue::bilingual("p", &["a", "b"], &["c", "d"]);
        d.aligned_turns.as_mut().unwrap().pop();
        assert!(matches!(d.validate(), Err(Error::Misaligned(_))));
    }

    #[test]
    fn unknown_fields_are_errors() {
        let line = r#"{"id":"x","kind":"monolingual","turns":[],"extra":1}"#;
        assert!(parse_corpus(line.as_bytes()).is_err());
    }

    #[test]
    fn speaker_parity() {
        for t in 1..20 {
            assert_eq!(Speaker::for_turn(t) == Speaker::S1, t % 2 == 1);
        }
    }
}
