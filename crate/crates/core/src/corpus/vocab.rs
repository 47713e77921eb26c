use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::CorpusError;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

/// Word ↔ id bijection. Kept words are ordered by descending count with
/// lexicographic tie-breaking, followed by `<unk>` and `<eos>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    unk: usize,
    eos: usize,
}

impl Vocabulary {
    /// Words seen at least `min_count` times are kept; every other token maps to `<unk>`.
    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>], min_count: u64) -> Result<Self, CorpusError> {
        if sentences.iter().all(|s| s.is_empty()) {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut unk_count = 0;
        for s in sentences {
            for w in s {
                let w = w.as_ref();
                if w == UNK || w == EOS {
                    unk_count += u64::from(w == UNK);
                    continue;
                }
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = Vec::new();
        for (w, c) in counts {
            if c >= min_count {
                kept.push((w, c));
            } else {
                unk_count += c;
            }
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let eos_count = sentences.len() as u64;
        let mut words: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
        let mut cs: Vec<u64> = kept.iter().map(|(_, c)| *c).collect();
        words.push(UNK.into());
        cs.push(unk_count);
        words.push(EOS.into());
        cs.push(eos_count);
        Ok(Self::from_parts(words, cs))
    }

    fn from_parts(words: Vec<String>, counts: Vec<u64>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect::<HashMap<_, _>>();
        let unk = index[UNK];
        let eos = index[EOS];
        Self {
            words,
            counts,
            index,
            unk,
            eos,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk(&self) -> usize {
        self.unk
    }

    pub fn eos(&self) -> usize {
        self.eos
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or the `<unk>` id when it is out of vocabulary.
    pub fn encode(&self, word: &str) -> usize {
        self.id(word).unwrap_or(self.unk)
    }

    pub fn encode_sentence<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.encode(w.as_ref())).collect()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    /// SHA-256 over the id-ordered word list; identifies the id assignment.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// `id \t word \t count` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (w, c)) in self.words.iter().zip(&self.counts).enumerate() {
            let _ = writeln!(out, "{i}\t{w}\t{c}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut words = Vec::new();
        let mut counts = Vec::new();
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: &str| CorpusError::Format {
                line: ln + 1,
                message: m.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad("expected id, word, count"));
            }
            let id: usize = cols[0].parse().map_err(|_| bad("bad id"))?;
            if id != words.len() {
                return Err(bad("ids must be dense and in order"));
            }
            words.push(cols[1].to_string());
            counts.push(cols[2].parse().map_err(|_| bad("bad count"))?);
        }
        for special in [UNK, EOS] {
            if words.iter().filter(|w| *w == special).count() != 1 {
                return Err(CorpusError::Format {
                    line: 0,
                    message: format!("{special} must appear exactly once"),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = words.iter().find(|w| !seen.insert(*w)) {
            return Err(CorpusError::Format {
                line: 0,
                message: format!("duplicate word {dup:?}"),
            });
        }
        Ok(Self::from_parts(words, counts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(words: &str) -> Vec<String> {
        words.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn min_count_maps_rare_words_to_unk() {
        let v = Vocabulary::build(&[s("a a b")], 2).unwrap();
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.encode("b"), v.unk());
        assert_eq!(v.len(), 3);
        assert_eq!(v.word(v.eos()), EOS);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let corpus = vec![s("the hawk flies"), s("the hawks fly")];
        let v = Vocabulary::build(&corpus, 1).unwrap();
        for sent in &corpus {
            assert!(v.encode_sentence(sent).iter().all(|&i| i != v.unk()));
        }
    }

    #[test]
    fn ordering_is_count_then_lexicographic() {
        let v = Vocabulary::build(&[s("c b a b c d")], 1).unwrap();
        assert_eq!(&v.words()[..4], &["b", "c", "a", "d"]);
        let again = Vocabulary::build(&[s("c b a b c d")], 1).unwrap();
        assert_eq!(v.content_hash(), again.content_hash());
    }

    #[test]
    fn empty_corpus_fails() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert_eq!(Vocabulary::build(&empty, 1), Err(CorpusError::EmptyCorpus));
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocabulary::build(&[s("x y y z")], 1).unwrap();
        let back = Vocabulary::from_tsv(&v.to_tsv()).unwrap();
        assert_eq!(back, v);
        for w in v.words() {
            assert_eq!(v.word(v.encode(w)), w);
        }
    }
}
