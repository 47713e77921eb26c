use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use crate::corpus::{generate_pairs, sample_corpus, MinimalPair, SampleOptions, Tree, Vocabulary, WeightedGrammar};
use crate::error::Result;
use crate::probe::Split;

/// Independent stream for one purpose derived from the experiment seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

const TRAIN_STREAM: u64 = 1;
const VALID_STREAM: u64 = 2;
const PAIR_STREAM: u64 = 3;
const PROBE_STREAM: u64 = 4;
const SUBSET_STREAM: u64 = 5;

/// Everything the desk experiment reads, generated from one seed.
#[derive(Clone, Debug)]
pub struct DeskData {
    pub train: Vec<Tree>,
    pub valid: Vec<Tree>,
    pub subset: Vec<Tree>,
    pub pairs: Vec<MinimalPair>,
    pub probe: Vec<(Split, Tree)>,
    pub vocab: Vocabulary,
}

impl DeskData {
    pub fn generate(grammar: &WeightedGrammar, cfg: &ExperimentConfig) -> Result<Self> {
        let seed = cfg.seed()?;
        let opts = SampleOptions {
            max_depth: cfg.get("data.max_depth")?,
            ..Default::default()
        };
        let train = sample_corpus(grammar, sub_seed(seed, TRAIN_STREAM), cfg.get("data.train")?, &opts)?;
        let valid = sample_corpus(grammar, sub_seed(seed, VALID_STREAM), cfg.get("data.valid")?, &opts)?;
        let sents: Vec<Vec<String>> = train.iter().map(Tree::sentence).collect();
        let vocab = Vocabulary::build(&sents, 1)?;
        let subset = teacher_subset(&train, cfg.get("teacher.subset")?, sub_seed(seed, SUBSET_STREAM));
        let pairs = pair_suite(grammar, &grammar.construction_tags(), seed, cfg.get("data.pairs")?)?;
        let probe = probe_trees(
            grammar,
            sub_seed(seed, PROBE_STREAM),
            [
                cfg.get("probe.train_tokens")?,
                cfg.get("probe.valid_tokens")?,
                cfg.get("probe.test_tokens")?,
            ],
            opts.max_depth,
        )?;
        Ok(Self {
            train,
            valid,
            subset,
            pairs,
            probe,
            vocab,
        })
    }

    pub fn ids(&self, trees: &[Tree]) -> Vec<Vec<usize>> {
        trees.iter().map(|t| self.vocab.encode_sentence(&t.leaves())).collect()
    }
}

/// `n` pairs for each construction in `tags`; each construction draws from
/// its own stream, so the pairs of one do not depend on which others are listed.
pub fn pair_suite(grammar: &WeightedGrammar, tags: &[&str], seed: u64, n: usize) -> Result<Vec<MinimalPair>> {
    let all = grammar.construction_tags();
    let mut pairs = Vec::new();
    for tag in tags {
        let i = all.iter().position(|t| t == tag).unwrap_or(all.len()) as u64;
        pairs.extend(generate_pairs(grammar, tag, sub_seed(seed, PAIR_STREAM + 16 * (i + 1)), n)?.pairs);
    }
    Ok(pairs)
}

/// Trees with a preterminal layer, split to reach each token budget.
fn probe_trees(
    grammar: &WeightedGrammar,
    seed: u64,
    budgets: [usize; 3],
    max_depth: usize,
) -> Result<Vec<(Split, Tree)>> {
    let opts = SampleOptions {
        preterminals: true,
        max_depth,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (split, budget) in [Split::Train, Split::Valid, Split::Test].into_iter().zip(budgets) {
        let mut tokens = 0;
        while tokens < budget {
            let t = grammar.sample_derivation(&mut rng, &opts)?.tree;
            tokens += t.leaves().len();
            out.push((split, t));
        }
    }
    Ok(out)
}

fn types(t: &Tree) -> BTreeSet<&str> {
    t.leaves().into_iter().collect()
}

/// The first `fraction` of a seeded shuffle of `trees`, then greedily
/// swapped so that every word type of the full corpus occurs at least once.
pub fn teacher_subset(trees: &[Tree], fraction: f64, seed: u64) -> Vec<Tree> {
    let mut order: Vec<usize> = (0..trees.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ((trees.len() as f64 * fraction).round() as usize).clamp(1, trees.len());
    let (chosen, rest) = order.split_at(n);
    let mut chosen = chosen.to_vec();
    let mut rest = rest.to_vec();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in &chosen {
        for w in trees[i].leaves() {
            *counts.entry(w).or_default() += 1;
        }
    }
    let all: BTreeSet<&str> = trees.iter().flat_map(types).collect();
    let target = chosen.len();
    loop {
        let missing: BTreeSet<&str> = all.iter().copied().filter(|w| !counts.contains_key(w)).collect();
        if missing.is_empty() {
            break;
        }
        // outside sentence covering the most missing types, earliest on ties
        let (pos, _) = rest
            .iter()
            .enumerate()
            .map(|(p, &i)| (p, types(&trees[i]).intersection(&missing).count()))
            .fold((0, 0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let incoming = rest.swap_remove(pos);
        // drop a chosen sentence whose every token occurs elsewhere, scanning from the end
        let victim = (0..chosen.len()).rev().find(|&p| {
            let mut own: BTreeMap<&str, usize> = BTreeMap::new();
            for w in trees[chosen[p]].leaves() {
                *own.entry(w).or_default() += 1;
            }
            own.iter().all(|(w, c)| counts[w] > *c)
        });
        for w in trees[incoming].leaves() {
            *counts.entry(w).or_default() += 1;
        }
        match victim {
            Some(p) => {
                let out = chosen[p];
                for w in trees[out].leaves() {
                    let c = counts.get_mut(w).expect("counted");
                    *c -= 1;
                }
                chosen[p] = incoming;
                rest.push(out);
            }
            None => chosen.push(incoming),
        }
    }
    if chosen.len() > target {
        log::warn!(
            "teacher subset grew from {target} to {} sentences to cover every word type",
            chosen.len()
        );
    }
    chosen.iter().map(|&i| trees[i].clone()).collect()
}
