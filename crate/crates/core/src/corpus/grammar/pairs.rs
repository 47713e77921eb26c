use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Feature, Recognizer, Template, WeightedGrammar};
use crate::corpus::CorpusError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MinimalPair {
    pub construction: String,
    pub grammatical: Vec<String>,
    pub ungrammatical: Vec<String>,
}

impl MinimalPair {
    pub fn to_tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.construction,
            self.grammatical.join(" "),
            self.ungrammatical.join(" ")
        )
    }
}

/// Pairs for one construction plus how many distinct pairs the template allows.
#[derive(Clone, Debug)]
pub struct PairSet {
    pub pairs: Vec<MinimalPair>,
    pub available: u128,
}

/// Candidate lexicon indices for every slot under one variable assignment.
fn slot_candidates(g: &WeightedGrammar, t: &Template, env: &HashMap<&str, &str>) -> Vec<Vec<usize>> {
    t.items
        .iter()
        .map(|it| {
            let dom = &g.categories[it.category].domain;
            let value = match &it.feature {
                Feature::Lit(v) => Some(v.as_str()),
                Feature::Var(v) => Some(env[v.as_str()]),
                Feature::NegVar(v) => dom.iter().map(String::as_str).find(|d| *d != env[v.as_str()]),
                Feature::Any => None,
            };
            match value {
                Some(v) => g.words_for(it.category, Some(v)).to_vec(),
                None if dom.is_empty() => g.words_for(it.category, None).to_vec(),
                None => dom
                    .iter()
                    .flat_map(|d| g.words_for(it.category, Some(d)).iter().copied())
                    .collect(),
            }
        })
        .collect()
}

/// The same lemma with the other value of a two-valued feature.
fn lemma_mate(g: &WeightedGrammar, entry: usize) -> Option<usize> {
    let e = &g.lexicon[entry];
    g.lexicon
        .iter()
        .position(|o| o.category == e.category && o.lemma == e.lemma && o.feature.is_some() && o.feature != e.feature)
}

/// Minimal pairs for one construction template.
///
/// When the template allows at most `n` distinct pairs all of them are
/// returned (with a warning if fewer than `n`); otherwise `n` distinct pairs
/// are sampled. Every pair is checked with a recogniser: the grammatical
/// member must be derivable and the ungrammatical one must not be.
pub fn generate_pairs(g: &WeightedGrammar, tag: &str, seed: u64, n: usize) -> Result<PairSet, CorpusError> {
    let t = g.template(tag).ok_or_else(|| CorpusError::UnknownConstruction {
        tag: tag.to_string(),
        available: g.construction_tags().join(", "),
    })?;

    // template variables and their domains, in order of first use
    let mut vars: Vec<(&str, &[String])> = Vec::new();
    for it in &t.items {
        if let Feature::Var(v) | Feature::NegVar(v) = &it.feature {
            if !vars.iter().any(|(n, _)| n == v) {
                vars.push((v.as_str(), &g.categories[it.category].domain));
            }
        }
    }
    let n_assign: usize = vars.iter().map(|(_, d)| d.len()).product();
    let mut blocks: Vec<(Vec<Vec<usize>>, u128)> = Vec::with_capacity(n_assign);
    for mut k in 0..n_assign {
        let mut env = HashMap::new();
        for (name, dom) in &vars {
            env.insert(*name, dom[k % dom.len()].as_str());
            k /= dom.len();
        }
        let cands = slot_candidates(g, t, &env);
        let size = cands.iter().map(|c| c.len() as u128).product();
        blocks.push((cands, size));
    }
    let available: u128 = blocks.iter().map(|b| b.1).sum();

    let decode = |mut idx: u128| -> Vec<usize> {
        let mut b = 0;
        while idx >= blocks[b].1 {
            idx -= blocks[b].1;
            b += 1;
        }
        blocks[b]
            .0
            .iter()
            .map(|c| {
                let len = c.len() as u128;
                let w = c[(idx % len) as usize];
                idx /= len;
                w
            })
            .collect()
    };

    let indices: Vec<u128> = if available <= n as u128 {
        if available < n as u128 {
            log::warn!("{tag}: requested {n} pairs but only {available} distinct pairs exist");
        }
        (0..available).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let i = rng.gen_range(0..available);
            if seen.insert(i) {
                out.push(i);
            }
        }
        out
    };

    let recognizer = Recognizer::new(g);
    let mut pairs = Vec::with_capacity(indices.len());
    let mut seen = HashSet::new();
    for idx in indices {
        let entries = decode(idx);
        let mut grammatical = Vec::with_capacity(entries.len());
        let mut ungrammatical = Vec::with_capacity(entries.len());
        for (it, &e) in t.items.iter().zip(&entries) {
            let word = g.lexicon[e].word.clone();
            if it.flip {
                let mate = lemma_mate(g, e).ok_or_else(|| CorpusError::TemplateInconsistent {
                    tag: tag.to_string(),
                    message: format!("{word:?} has no counterpart with the other feature value"),
                })?;
                ungrammatical.push(g.lexicon[mate].word.clone());
            } else {
                ungrammatical.push(word.clone());
            }
            grammatical.push(word);
        }
        if !recognizer.accepts(&grammatical) {
            return Err(CorpusError::TemplateInconsistent {
                tag: tag.to_string(),
                message: format!("grammar does not derive {:?}", grammatical.join(" ")),
            });
        }
        if recognizer.accepts(&ungrammatical) {
            return Err(CorpusError::TemplateInconsistent {
                tag: tag.to_string(),
                message: format!("grammar derives {:?}", ungrammatical.join(" ")),
            });
        }
        if seen.insert(grammatical.clone()) {
            pairs.push(MinimalPair {
                construction: tag.to_string(),
                grammatical,
                ungrammatical,
            });
        }
    }
    Ok(PairSet { pairs, available })
}
