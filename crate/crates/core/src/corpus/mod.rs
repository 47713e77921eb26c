//! Trees, vocabularies, derivation linearisation, synthetic grammars and the
//! plain-text corpus formats.

pub mod grammar;
mod linearize;
mod tree;
mod vocab;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub use grammar::{
    generate_pairs, sample_corpus, MinimalPair, PairSet, Recognizer, SampleOptions, WeightedGrammar, AGREEMENT_GRAMMAR,
};
pub use linearize::{delinearize, linearize, TreeAction};
pub use tree::{parse_bracketed, print_bracketed, Tree};
pub use vocab::{Vocabulary, EOS, UNK};

use crate::error::Result;
use crate::fsutil;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("grammar line {line}: {message}")]
    Grammar { line: usize, message: String },
    #[error("{0} consecutive derivations hit the depth limit; grammar is likely non-terminating")]
    NonTerminating(usize),
    #[error("unknown construction {tag:?}; available: {available}")]
    UnknownConstruction { tag: String, available: String },
    #[error("template {tag}: {message}")]
    TemplateInconsistent { tag: String, message: String },
}

pub type Sentence = Vec<String>;

/// One whitespace-tokenised sentence per non-empty line.
pub fn parse_plain(text: &str) -> Vec<Sentence> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn format_plain(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    out
}

/// One bracketed tree per non-empty line; errors carry the line number.
pub fn parse_treebank(text: &str) -> Result<Vec<Tree>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t = parse_bracketed(line).map_err(|e| CorpusError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}

pub fn format_treebank(trees: &[Tree]) -> String {
    let mut out = String::new();
    for t in trees {
        let _ = writeln!(out, "{t}");
    }
    out
}

/// `construction \t grammatical \t ungrammatical` per line.
pub fn parse_pairs(text: &str) -> Result<Vec<MinimalPair>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| CorpusError::Format {
            line: i + 1,
            message: m.to_string(),
        };
        if cols.len() != 3 {
            return Err(bad("expected construction, grammatical, ungrammatical"));
        }
        let words = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let pair = MinimalPair {
            construction: cols[0].trim().to_string(),
            grammatical: words(cols[1]),
            ungrammatical: words(cols[2]),
        };
        if pair.construction.is_empty() || pair.grammatical.is_empty() || pair.ungrammatical.is_empty() {
            return Err(bad("empty field"));
        }
        if pair.grammatical == pair.ungrammatical {
            return Err(bad("the two sentences are identical"));
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn format_pairs(pairs: &[MinimalPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.to_tsv_line());
        out.push('\n');
    }
    out
}

pub fn read_plain(path: &Path) -> Result<Vec<Sentence>> {
    Ok(parse_plain(&fsutil::read_to_string(path)?))
}

pub fn read_treebank(path: &Path) -> Result<Vec<Tree>> {
    Ok(parse_treebank(&fsutil::read_to_string(path)?)?)
}

pub fn read_pairs(path: &Path) -> Result<Vec<MinimalPair>> {
    Ok(parse_pairs(&fsutil::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treebank_round_trip() {
        let text = "(S (NP the hawk) (VP flies))\n\n(S a)\n";
        let trees = parse_treebank(text).unwrap();
        assert_eq!(trees.len(), 2);
        assert_eq!(format_treebank(&trees), "(S (NP the hawk) (VP flies))\n(S a)\n");
    }

    #[test]
    fn treebank_error_names_line() {
        let err = parse_treebank("(S a)\n(S (NP a)\n").unwrap_err();
        assert!(matches!(err, CorpusError::Format { line: 2, .. }), "{err}");
    }

    #[test]
    fn pairs_round_trip() {
        let text = "simple_agreement\tthe hawk flies\tthe hawk fly\n";
        let pairs = parse_pairs(text).unwrap();
        assert_eq!(pairs[0].ungrammatical, vec!["the", "hawk", "fly"]);
        assert_eq!(format_pairs(&pairs), text);
        assert!(parse_pairs("x\ta b\ta b\n").is_err());
        assert!(parse_pairs("x\ta b\n").is_err());
    }
}
