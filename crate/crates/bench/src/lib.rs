//! Untrained models over a small sample of the agreement grammar, shared by
//! the benchmarks.

use dsalm::corpus::{sample_corpus, SampleOptions, Tree, Vocabulary, WeightedGrammar, AGREEMENT_GRAMMAR};
use dsalm::lstm::{LstmLm, TrainConfig};
use dsalm::rnng::{collect_labels, Rnng, RnngConfig};

pub struct Fixture {
    pub trees: Vec<Tree>,
    pub ids: Vec<Vec<usize>>,
    pub lstm: LstmLm,
    pub rnng: Rnng,
}

/// `n` sentences and freshly initialised models of width `hidden`.
pub fn fixture(n: usize, hidden: usize) -> Fixture {
    let g = WeightedGrammar::parse(AGREEMENT_GRAMMAR).expect("built-in grammar parses");
    let trees = sample_corpus(&g, 11, n, &SampleOptions::default()).expect("sampling");
    let sents: Vec<Vec<String>> = trees.iter().map(Tree::sentence).collect();
    let vocab = Vocabulary::build(&sents, 1).expect("non-empty corpus");
    let ids = sents.iter().map(|s| vocab.encode_sentence(s)).collect();
    let lstm = LstmLm::new(
        vocab.clone(),
        TrainConfig {
            hidden,
            embed: hidden,
            ..Default::default()
        },
    )
    .expect("lstm");
    let rnng = Rnng::new(
        vocab,
        collect_labels(&trees),
        RnngConfig {
            hidden,
            embed: hidden,
            ..Default::default()
        },
    )
    .expect("rnng");
    Fixture { trees, ids, lstm, rnng }
}

/// Index of a sentence with exactly `len` words, or the longest one.
pub fn sentence_of_length(f: &Fixture, len: usize) -> usize {
    f.ids
        .iter()
        .position(|s| s.len() == len)
        .unwrap_or_else(|| (0..f.ids.len()).max_by_key(|&i| f.ids[i].len()).expect("non-empty"))
}
