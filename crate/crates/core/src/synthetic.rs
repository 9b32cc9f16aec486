//! Toy bilingual chat corpora with planted context dependencies.
//!
//! Both languages are word-for-word substitutions over a shared inventory
//! of concepts. Every dialogue has a topic (its content words), each speaker
//! carries a lexical tic drawn from a speaker-specific pool, and a dialogue
//! marker fixes the translation of every ambiguous source word. The marker
//! appears one to three turns before each ambiguous turn and never inside
//! it. Dialogues come in mirrored pairs that differ only in the marker, so
//! the ambiguous turns alone cannot reveal the right translation.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{write_corpus, Dialogue, Lang};
use crate::error::{Error, Result};
use crate::rng::{stream, DetRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Bilingual training dialogues (rounded up to an even count).
    pub train_dialogues: usize,
    /// Bilingual held-out dialogues (rounded up to an even count).
    pub test_dialogues: usize,
    /// Bilingual development dialogues, generated without mirroring.
    pub dev_dialogues: usize,
    /// Monolingual dialogues per language.
    pub mono_dialogues: usize,
    /// Context-free sentence pairs.
    pub sentences: usize,
    pub turns: usize,
    /// Share of turns carrying an ambiguous word.
    pub dependency_fraction: f64,
    pub topics: usize,
    pub words_per_topic: usize,
    /// Topic-neutral filler words.
    pub common_words: usize,
    pub ambiguous_words: usize,
    /// Size of each speaker's tic pool.
    pub tics_per_speaker: usize,
    /// Content words per utterance, before marker, ambiguous word and tic.
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 1,
            train_dialogues: 512,
            test_dialogues: 32,
            dev_dialogues: 32,
            mono_dialogues: 400,
            sentences: 2000,
            turns: 6,
            dependency_fraction: 0.5,
            topics: 48,
            words_per_topic: 1,
            common_words: 8,
            ambiguous_words: 3,
            tics_per_speaker: 1,
            min_words: 1,
            max_words: 3,
        }
    }
}

impl SyntheticSpec {
    /// Parses TOML; absent keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.dependency_fraction) {
            bad.push("dependency_fraction must be in [0, 1]");
        }
        if self.turns < 2 {
            bad.push("turns must be at least 2");
        }
        if self.topics == 0 || self.words_per_topic == 0 {
            bad.push("topics and words_per_topic must be positive");
        }
        if self.dependency_fraction > 0.0 && self.ambiguous_words == 0 {
            bad.push("a positive dependency_fraction needs ambiguous_words");
        }
        if self.tics_per_speaker == 0 {
            bad.push("tics_per_speaker must be positive");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            bad.push("need 1 <= min_words <= max_words");
        }
        if self.ambiguous_turns() > self.turns - 1 {
            bad.push("dependency_fraction leaves no room for markers");
        } else if self.ambiguous_turns() > 0 && self.turns - self.ambiguous_turns() < self.ambiguous_turns().div_ceil(3) {
            bad.push("too few unambiguous turns to place markers");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    fn ambiguous_turns(&self) -> usize {
        (self.dependency_fraction * self.turns as f64).round() as usize
    }
}

/// A source word whose translation depends on the dialogue marker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguousWord {
    pub source: String,
    /// Translations under marker 0 and marker 1.
    pub senses: [String; 2],
}

/// Surface forms of every concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    /// `(source, target)` per topic, per word.
    pub topic_words: Vec<Vec<(String, String)>>,
    pub common_words: Vec<(String, String)>,
    pub markers: [(String, String); 2],
    pub ambiguous: Vec<AmbiguousWord>,
    /// Tic pools of the first and second speaker.
    pub tics: [Vec<(String, String)>; 2],
}

impl Lexicon {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The ambiguous entry for a source word.
    pub fn ambiguous_entry(&self, source: &str) -> Option<&AmbiguousWord> {
        self.ambiguous.iter().find(|a| a.source == source)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Concept {
    Topic(usize, usize),
    Common(usize),
    Marker,
    Ambiguous(usize),
    Tic(usize, usize),
}

/// Concepts of one dialogue, rendered once per marker.
struct Plan {
    turns: Vec<Vec<Concept>>,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub lexicon: Lexicon,
    pub sentences: Vec<Dialogue>,
    pub train: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    pub dev: Vec<Dialogue>,
    pub mono_source: Vec<Dialogue>,
    pub mono_target: Vec<Dialogue>,
}

pub const SENTENCES_FILE: &str = "sentences.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const DEV_FILE: &str = "dev.jsonl";
pub const MONO_SOURCE_FILE: &str = "mono.src.jsonl";
pub const MONO_TARGET_FILE: &str = "mono.tgt.jsonl";
pub const LEXICON_FILE: &str = "lexicon.json";

/// Deterministic function of `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = stream(spec.seed, &[0]);
    let lexicon = make_lexicon(spec, &mut rng);
    let gen = Generator { spec, lex: &lexicon };

    let mut rng = stream(spec.seed, &[1]);
    let sentences = (0..spec.sentences.div_ceil(spec.turns))
        .map(|i| {
            let n = spec.turns.min(spec.sentences - i * spec.turns);
            let turns: Vec<(Vec<String>, Vec<String>)> = (0..n).map(|_| gen.sentence(&mut rng)).collect();
            bilingual(format!("sent{i}"), &turns)
        })
        .collect();

    let pairs = |name: &str, count: usize, path: u64| -> Result<Vec<Dialogue>> {
        let mut rng = stream(spec.seed, &[path]);
        let mut out = Vec::new();
        for i in 0..count.div_ceil(2) {
            let plan = gen.plan(&mut rng)?;
            for marker in [0, 1] {
                let turns: Vec<_> = plan
                    .turns
                    .iter()
                    .map(|t| (gen.render(t, marker, Lang::Source), gen.render(t, marker, Lang::Target)))
                    .collect();
                out.push(bilingual(format!("{name}{i}{}", ["a", "b"][marker]), &turns));
            }
        }
        Ok(out)
    };
    let train = pairs("train", spec.train_dialogues, 2)?;
    let test = pairs("test", spec.test_dialogues, 3)?;

    let mut rng = stream(spec.seed, &[6]);
    let dev = (0..spec.dev_dialogues)
        .map(|i| {
            let plan = gen.plan(&mut rng)?;
            let marker = rng.gen_range(0..2);
            let turns: Vec<_> = plan
                .turns
                .iter()
                .map(|t| (gen.render(t, marker, Lang::Source), gen.render(t, marker, Lang::Target)))
                .collect();
            Ok(bilingual(format!("dev{i}"), &turns))
        })
        .collect::<Result<Vec<_>>>()?;

    let mono = |lang: Lang, path: u64| -> Result<Vec<Dialogue>> {
        let mut rng = stream(spec.seed, &[path]);
        let tag = if lang == Lang::Source { "msrc" } else { "mtgt" };
        (0..spec.mono_dialogues)
            .map(|i| {
                let plan = gen.plan(&mut rng)?;
                let marker = rng.gen_range(0..2);
                let texts: Vec<String> = plan.turns.iter().map(|t| gen.render(t, marker, lang).join(" ")).collect();
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                Ok(Dialogue::monolingual(format!("{tag}{i}"), lang, &refs))
            })
            .collect()
    };
    let mono_source = mono(Lang::Source, 4)?;
    let mono_target = mono(Lang::Target, 5)?;

    Ok(SyntheticCorpus {
        lexicon,
        sentences,
        train,
        test,
        dev,
        mono_source,
        mono_target,
    })
}

fn bilingual(id: String, turns: &[(Vec<String>, Vec<String>)]) -> Dialogue {
    let src: Vec<String> = turns.iter().map(|(s, _)| s.join(" ")).collect();
    let tgt: Vec<String> = turns.iter().map(|(_, t)| t.join(" ")).collect();
    let s: Vec<&str> = src.iter().map(String::as_str).collect();
    let t: Vec<&str> = tgt.iter().map(String::as_str).collect();
    Dialogue::bilingual(id, &s, &t)
}

/// Random pronounceable word not yet in `used`.
fn fresh_word(rng: &mut DetRng, consonants: &[u8], vowels: &[u8], used: &mut BTreeSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .flat_map(|_| [*consonants.choose(rng).unwrap() as char, *vowels.choose(rng).unwrap() as char])
            .collect();
        if used.insert(w.clone()) {
            return w;
        }
    }
}

fn make_lexicon(spec: &SyntheticSpec, rng: &mut DetRng) -> Lexicon {
    let mut used = BTreeSet::new();
    let mut pair = |rng: &mut DetRng| {
        let s = fresh_word(rng, b"bdgklmnprt", b"aiou", &mut used);
        let t = fresh_word(rng, b"fhjsvwz", b"aeoy", &mut used);
        (s, t)
    };
    let topic_words = (0..spec.topics)
        .map(|_| (0..spec.words_per_topic).map(|_| pair(rng)).collect())
        .collect();
    let common_words = (0..spec.common_words).map(|_| pair(rng)).collect();
    let markers = [pair(rng), pair(rng)];
    let ambiguous = (0..spec.ambiguous_words)
        .map(|_| {
            let (source, first) = pair(rng);
            let (_, second) = pair(rng);
            AmbiguousWord {
                source,
                senses: [first, second],
            }
        })
        .collect();
    let tics = [
        (0..spec.tics_per_speaker).map(|_| pair(rng)).collect(),
        (0..spec.tics_per_speaker).map(|_| pair(rng)).collect(),
    ];
    Lexicon {
        topic_words,
        common_words,
        markers,
        ambiguous,
        tics,
    }
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    lex: &'a Lexicon,
}

impl Generator<'_> {
    fn content(&self, topic: usize, rng: &mut DetRng) -> Vec<Concept> {
        let n = rng.gen_range(self.spec.min_words..=self.spec.max_words);
        (0..n)
            .map(|k| {
                // The first word always names the topic.
                if k == 0 || self.spec.common_words == 0 || rng.gen_bool(0.5) {
                    Concept::Topic(topic, rng.gen_range(0..self.spec.words_per_topic))
                } else {
                    Concept::Common(rng.gen_range(0..self.spec.common_words))
                }
            })
            .collect()
    }

    fn plan(&self, rng: &mut DetRng) -> Result<Plan> {
        let spec = self.spec;
        let topic = rng.gen_range(0..spec.topics);
        let tics = [rng.gen_range(0..spec.tics_per_speaker), rng.gen_range(0..spec.tics_per_speaker)];
        let k = spec.ambiguous_turns();
        let (ambiguous, markers) = (0..1000)
            .find_map(|_| place(spec.turns, k, rng))
            .ok_or_else(|| Error::Config("could not place markers for the ambiguous turns".into()))?;
        let turns = (1..=spec.turns)
            .map(|t| {
                let mut c = self.content(topic, rng);
                if ambiguous.contains(&t) {
                    let at = rng.gen_range(0..=c.len());
                    c.insert(at, Concept::Ambiguous(rng.gen_range(0..spec.ambiguous_words)));
                }
                if markers.contains(&t) {
                    let at = rng.gen_range(0..=c.len());
                    c.insert(at, Concept::Marker);
                }
                let speaker = (t + 1) % 2;
                c.push(Concept::Tic(speaker, tics[speaker]));
                c
            })
            .collect();
        Ok(Plan { turns })
    }

    fn render(&self, concepts: &[Concept], marker: usize, lang: Lang) -> Vec<String> {
        let pick = |p: &(String, String)| match lang {
            Lang::Source => p.0.clone(),
            Lang::Target => p.1.clone(),
        };
        concepts
            .iter()
            .map(|c| match *c {
                Concept::Topic(t, i) => pick(&self.lex.topic_words[t][i]),
                Concept::Common(i) => pick(&self.lex.common_words[i]),
                Concept::Marker => pick(&self.lex.markers[marker]),
                Concept::Ambiguous(i) => {
                    let a = &self.lex.ambiguous[i];
                    match lang {
                        Lang::Source => a.source.clone(),
                        Lang::Target => a.senses[marker].clone(),
                    }
                }
                Concept::Tic(s, i) => pick(&self.lex.tics[s][i]),
            })
            .collect()
    }

    /// One context-free pair. Ambiguous words take a random sense and no
    /// marker accompanies them.
    fn sentence(&self, rng: &mut DetRng) -> (Vec<String>, Vec<String>) {
        let topic = rng.gen_range(0..self.spec.topics);
        let mut c = self.content(topic, rng);
        if self.spec.ambiguous_words > 0 && rng.gen_bool(self.spec.dependency_fraction) {
            let at = rng.gen_range(0..=c.len());
            c.insert(at, Concept::Ambiguous(rng.gen_range(0..self.spec.ambiguous_words)));
        }
        if rng.gen_bool(0.2) {
            let at = rng.gen_range(0..=c.len());
            c.insert(at, Concept::Marker);
        }
        let speaker = rng.gen_range(0..2);
        c.push(Concept::Tic(speaker, rng.gen_range(0..self.spec.tics_per_speaker)));
        let marker = rng.gen_range(0..2);
        (self.render(&c, marker, Lang::Source), self.render(&c, marker, Lang::Target))
    }
}

/// Chooses `k` ambiguous turns in `2..=turns` and marker turns so that each
/// ambiguous turn has a marker one to three turns earlier. `None` when the
/// random choice leaves an ambiguous turn uncovered.
fn place(turns: usize, k: usize, rng: &mut DetRng) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut candidates: Vec<usize> = (2..=turns).collect();
    candidates.shuffle(rng);
    let mut ambiguous: Vec<usize> = candidates[..k].to_vec();
    ambiguous.sort_unstable();
    let mut markers: Vec<usize> = Vec::new();
    for &u in &ambiguous {
        let lo = u.saturating_sub(3).max(1);
        if markers.iter().any(|&m| m >= lo && m < u) {
            continue;
        }
        let free: Vec<usize> = (lo..u).filter(|t| !ambiguous.contains(t)).collect();
        markers.push(*free.choose(rng)?);
    }
    Some((ambiguous, markers))
}

impl SyntheticCorpus {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        write_corpus(&dir.join(SENTENCES_FILE), &self.sentences)?;
        write_corpus(&dir.join(TRAIN_FILE), &self.train)?;
        write_corpus(&dir.join(TEST_FILE), &self.test)?;
        write_corpus(&dir.join(DEV_FILE), &self.dev)?;
        write_corpus(&dir.join(MONO_SOURCE_FILE), &self.mono_source)?;
        write_corpus(&dir.join(MONO_TARGET_FILE), &self.mono_target)?;
        let lex = serde_json::to_string_pretty(&self.lexicon)?;
        let p = dir.join(LEXICON_FILE);
        fs::write(&p, lex + "\n").map_err(|e| Error::file(&p, e))
    }

    /// Every text of every corpus, for tokenizer training.
    pub fn texts(&self) -> Vec<&str> {
        [&self.sentences, &self.train, &self.mono_source, &self.mono_target]
            .into_iter()
            .flatten()
            .flat_map(|d| d.turns.iter().chain(d.aligned_turns.iter().flatten()))
            .map(|u| u.text.as_str())
            .collect()
    }
}

/// Share of ambiguous source words whose translation shows exactly the
/// reference sense. Returns `(correct, total)`.
pub fn ambiguous_accuracy(
    lexicon: &Lexicon,
    references: &[Dialogue],
    hypotheses: &[String],
) -> Result<(usize, usize)> {
    let mut correct = 0;
    let mut total = 0;
    let mut hyp_iter = hypotheses.iter();
    for d in references {
        let tgt = d.target().ok_or_else(|| Error::Corpus(format!("`{}` has no target side", d.id)))?;
        for (src, gold) in d.source().iter().zip(tgt) {
            let hyp = hyp_iter
                .next()
                .ok_or_else(|| Error::Invalid("fewer hypotheses than reference turns".into()))?;
            let hyp_words: Vec<&str> = hyp.split_whitespace().collect();
            let gold_words: Vec<&str> = gold.text.split_whitespace().collect();
            for w in src.text.split_whitespace() {
                let Some(entry) = lexicon.ambiguous_entry(w) else { continue };
                total += 1;
                let sense = entry.senses.iter().position(|s| gold_words.contains(&s.as_str()));
                if let Some(k) = sense {
                    let right = hyp_words.contains(&entry.senses[k].as_str());
                    let wrong = hyp_words.contains(&entry.senses[1 - k].as_str());
                    if right && !wrong {
                        correct += 1;
                    }
                }
            }
        }
    }
    if hyp_iter.next().is_some() {
        return Err(Error::Invalid("more hypotheses than reference turns".into()));
    }
    Ok((correct, total))
}

/// Accuracy on ambiguous words of the best translation rule that sees only
/// the current source utterance: each distinct utterance gets its most
/// frequent sense assignment, ties going to the overall more frequent one.
pub fn context_agnostic_accuracy(lexicon: &Lexicon, dialogues: &[Dialogue]) -> f64 {
    let mut by_source: HashMap<&str, HashMap<&str, usize>> = HashMap::new();
    let mut marginal: HashMap<&str, usize> = HashMap::new();
    for d in dialogues {
        for (s, t) in d.source().iter().zip(d.target().unwrap_or_default()) {
            *by_source.entry(&s.text).or_default().entry(&t.text).or_default() += 1;
            *marginal.entry(&t.text).or_default() += 1;
        }
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (src, targets) in &by_source {
        let best = targets
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(marginal[a.0].cmp(&marginal[b.0])).then(b.0.cmp(a.0)))
            .map(|(t, _)| *t)
            .expect("at least one target");
        let best_words: Vec<&str> = best.split_whitespace().collect();
        for (tgt, &count) in targets {
            let tgt_words: Vec<&str> = tgt.split_whitespace().collect();
            for w in src.split_whitespace() {
                let Some(entry) = lexicon.ambiguous_entry(w) else { continue };
                total += count;
                let k = entry.senses.iter().position(|s| tgt_words.contains(&s.as_str()));
                if let Some(k) = k {
                    if best_words.contains(&entry.senses[k].as_str()) && !best_words.contains(&entry.senses[1 - k].as_str()) {
                        correct += count;
                    }
                }
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        correct as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Speaker;

    fn small(fraction: f64) -> SyntheticSpec {
        SyntheticSpec {
            train_dialogues: 40,
            test_dialogues: 10,
            dev_dialogues: 6,
            mono_dialogues: 20,
            sentences: 30,
            dependency_fraction: fraction,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_same_files() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        generate(&small(0.5)).unwrap().write(&a).unwrap();
        generate(&small(0.5)).unwrap().write(&b).unwrap();
        for f in [SENTENCES_FILE, TRAIN_FILE, TEST_FILE, DEV_FILE, MONO_SOURCE_FILE, MONO_TARGET_FILE, LEXICON_FILE] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        let mut other = small(0.5);
        other.seed = 2;
        assert_ne!(generate(&other).unwrap().train, generate(&small(0.5)).unwrap().train);
    }

    #[test]
    fn records_are_valid_and_alternate() {
        let c = generate(&small(0.5)).unwrap();
        for d in c.train.iter().chain(&c.test).chain(&c.dev).chain(&c.mono_source).chain(&c.mono_target).chain(&c.sentences) {
            d.validate().unwrap();
            for u in &d.turns {
                assert_eq!(u.speaker, Speaker::for_turn(u.turn));
            }
        }
        assert_eq!(c.train.len(), 40);
        assert_eq!(c.sentences.iter().map(Dialogue::len).sum::<usize>(), 30);
    }

    #[test]
    fn markers_precede_ambiguous_turns() {
        let c = generate(&small(0.5)).unwrap();
        let lex = &c.lexicon;
        let is_marker = |w: &str| lex.markers.iter().any(|m| m.0 == w);
        let mut seen = 0;
        for d in &c.train {
            let turns: Vec<Vec<&str>> = d.turns.iter().map(|u| u.text.split_whitespace().collect()).collect();
            for (i, t) in turns.iter().enumerate() {
                if t.iter().any(|w| lex.ambiguous_entry(w).is_some()) {
                    seen += 1;
                    assert!(!t.iter().any(|w| is_marker(w)));
                    assert!((i.saturating_sub(3)..i).any(|j| turns[j].iter().any(|w| is_marker(w))));
                }
            }
        }
        assert_eq!(seen, 40 * 3);
    }

    #[test]
    fn no_dependency_means_context_free_translation() {
        let c = generate(&small(0.0)).unwrap();
        assert_eq!(context_agnostic_accuracy(&c.lexicon, &c.train), 1.0);
        let mut map: HashMap<&str, &str> = HashMap::new();
        for d in &c.train {
            for (s, t) in d.source().iter().zip(d.target().unwrap()) {
                assert_eq!(*map.entry(&s.text).or_insert(&t.text), t.text.as_str());
            }
        }
    }

    #[test]
    fn half_dependency_caps_context_free_accuracy() {
        let c = generate(&small(0.5)).unwrap();
        assert_eq!(context_agnostic_accuracy(&c.lexicon, &c.train), 0.5);
        assert_eq!(context_agnostic_accuracy(&c.lexicon, &c.test), 0.5);
    }

    #[test]
    fn accuracy_counts_reference_senses() {
        let c = generate(&small(0.5)).unwrap();
        let gold: Vec<String> = c.test.iter().flat_map(|d| d.target().unwrap().iter().map(|u| u.text.clone())).collect();
        let (right, total) = ambiguous_accuracy(&c.lexicon, &c.test, &gold).unwrap();
        assert_eq!((right, total), (30, 30));
        let empty = vec![String::new(); gold.len()];
        assert_eq!(ambiguous_accuracy(&c.lexicon, &c.test, &empty).unwrap(), (0, 30));
        assert!(ambiguous_accuracy(&c.lexicon, &c.test, &gold[1..]).is_err());
    }

    #[test]
    fn inconsistent_specs_list_fields() {
        let bad = SyntheticSpec {
            dependency_fraction: 1.5,
            min_words: 0,
            ..SyntheticSpec::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("dependency_fraction") && msg.contains("min_words"));
    }
}
